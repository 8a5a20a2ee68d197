#include "harivo/cli.hpp"

int main(int argc, char** argv) { return harivo::cli(argc, argv); }
