#include "echotrain/cli.hpp"

int main(int argc, char** argv)
{
    return echotrain::cli::run_cli(argc, argv);
}
