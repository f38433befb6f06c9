#include "carigen/cli.hpp"

int main(int argc, char** argv) { return carigen::run_cli(argc, argv); }
