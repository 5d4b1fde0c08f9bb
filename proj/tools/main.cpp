#include "cli.hpp"

#include "splatdrive/common.hpp"

#include <iostream>

int main(int argc, char** argv) {
  splatdrive::init_logging();
  return splatdrive::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
