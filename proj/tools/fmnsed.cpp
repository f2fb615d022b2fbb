#include "fmnsed_cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fmnsed::cli::run_cli(args, std::cout, std::cerr);
}
