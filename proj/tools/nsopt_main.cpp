#include <string>
#include <vector>

#include "nsopt/reporting.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return nsopt::run_cli(args);
}
