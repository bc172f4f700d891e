#include <smworlds/cli.hpp>

int main(int argc, char** argv) { return smw::cli::main(argc, argv); }
