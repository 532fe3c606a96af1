#include "sgen/gates.hpp"

#include <cmath>
#include <cstdio>

#include "sgen/image.hpp"

namespace sgen {

GateDump dump_gates(GeneratorParams& params, const SgenConfig& config, const Tensor& source,
                    const std::filesystem::path& out_dir) {
  if (config.combiner != Combiner::sgu)
    throw ConfigError("gate maps exist only for the sgu combiner, model uses '" +
                      to_string(config.combiner) + "'");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

  const Shape s = source.shape();
  Tensor first(Shape{1, s.c, s.h, s.w},
               source.data().head(static_cast<Eigen::Index>(static_cast<std::size_t>(s.c) * s.plane())));
  Graph g;
  ForwardOptions opt;
  opt.trainable = false;
  const GeneratorOutput out = generator_forward(g, g.constant(first), params, config, opt);

  GateDump dump;
  for (const JunctionGates& jg : out.acts.gates) {
    const Tensor ga = jg.active.detach(), gp = jg.passive.detach();
    const Shape gs = ga.shape();
    JunctionGateStats st;
    st.junction = jg.name;
    st.channels = gs.c;
    st.mean_active = ga.data().mean();
    st.mean_passive = gp.data().mean();
    st.mean_sum = (ga.data() + gp.data()).mean();
    dump.junctions.push_back(st);

    std::string stem = jg.name;
    for (char& ch : stem)
      if (ch == '.') ch = '_';
    for (const auto& [tag, t] : {std::pair{"active", &ga}, std::pair{"passive", &gp}}) {
      for (int c = 0; c < gs.c; ++c) {
        Image8 img(1, gs.h, gs.w);
        for (int y = 0; y < gs.h; ++y)
          for (int x = 0; x < gs.w; ++x)
            img.at(y, x) = static_cast<std::uint8_t>(std::lround(255.0 * t->at(0, c, y, x)));
        char name[32];
        std::snprintf(name, sizeof name, "_c%02d.pgm", c);
        const auto path = out_dir / (stem + "_" + tag + name);
        save_image(img, path);
        dump.files.push_back(path);
      }
    }
  }
  return dump;
}

}  // namespace sgen
