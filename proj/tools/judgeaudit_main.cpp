#include "judgeaudit/cli.hpp"

int main(int argc, char** argv) {
    return judgeaudit::run_cli(argc, argv);
}
