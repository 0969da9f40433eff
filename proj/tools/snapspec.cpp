#include <string>
#include <vector>

#include "snapspec/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return snapspec::run_cli(args);
}
