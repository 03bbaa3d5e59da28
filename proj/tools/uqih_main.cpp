#include <string>
#include <vector>

#include "uqih/cli.hpp"

int main(int argc, char** argv) {
  return uqih::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
