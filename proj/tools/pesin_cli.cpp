#include "pesinkit/harness.hpp"

int main(int argc, char** argv) { return pesinkit::run_cli(argc, argv); }
