#include <iostream>

#include "fpnseg/cli.hpp"

int main(int argc, char** argv) {
  return fpnseg::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
