#include "occudiff/pipeline.hpp"

int main(int argc, char** argv) { return occudiff::run_cli(argc, argv); }
