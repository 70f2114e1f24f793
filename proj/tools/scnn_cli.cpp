#include "scnn/experiment.hpp"

int main(int argc, char** argv) { return scnn::run_cli(argc, argv); }
