#include "cli.hpp"

int main(int argc, char** argv) { return uscore::cli::dispatch(argc, argv); }
