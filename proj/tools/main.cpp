#include "commands.hpp"

#include <omp.h>

#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("MCG_THREADS")) {
    const int n = std::atoi(threads);
    if (n > 0)
      omp_set_num_threads(n);
  }
  return mcg::cli::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
