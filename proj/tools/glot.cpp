#include "glot/cli.hpp"

int main(int argc, char** argv) { return glot::run_cli(argc, argv); }
