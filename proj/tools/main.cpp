#include "conceptdrive/cli.hpp"

int main(int argc, char** argv) { return conceptdrive::run_cli(argc, argv); }
