#include <iostream>

#include "gridil/case14.hpp"

int main() {
  std::cout << gridil::to_text(gridil::build_default_spec());
  return 0;
}
