#include <iostream>

#include "kantrust/report.hpp"

int main(int argc, char** argv) { return kantrust::report::run_cli(argc, argv, std::cout, std::cerr); }
