#include "cpdyn/cli.hpp"

int main(int argc, char** argv) { return cpdyn::parse_and_dispatch(argc, argv); }
