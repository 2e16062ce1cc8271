#include "synthetic.hpp"

#include <iostream>

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_synthetic_cifar <dir>\n";
    return 2;
  }
  synthetic::write_dataset(argv[1], 40, 60);
  return 0;
}
