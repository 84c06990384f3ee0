#include "alt/cli.hpp"

int main(int argc, char** argv) { return alt::run_cli(argc, argv); }
