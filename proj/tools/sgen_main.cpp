#include <iostream>

#include "sgen/commands.hpp"

int main(int argc, char** argv) {
  return sgen::run_cli(argc, argv, std::cout, std::cerr);
}
