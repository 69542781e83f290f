#include "fdesolve/cli.hpp"

int main(int argc, char** argv)
{
    return fdesolve::cli::main_entry(argc, argv);
}
