#include "helab/cli.hpp"

int main(int argc, char** argv) { return helab::parse_and_dispatch(argc, argv); }
