#include "commands.hpp"

#include "arcflow/util/alloc.hpp"

#include <iostream>

int main(int argc, char** argv) {
  arcflow::util::tune_allocator();
  return arcflow::cli::run_cli(argc, argv, std::cout, std::cerr);
}
