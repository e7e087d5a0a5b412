#include <string>
#include <vector>

#include "nsnmt/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return nsnmt::run_cli(std::move(args));
}
