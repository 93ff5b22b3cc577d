#include <iostream>

#include "autolab/cli.hpp"

int main(int argc, char** argv) {
  return autolab::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
