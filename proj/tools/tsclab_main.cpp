#include "tsclab/experiment.hpp"

int main(int argc, char** argv) { return tsclab::cli_main(argc, argv); }
