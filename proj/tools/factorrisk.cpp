#include "commands.hpp"

int main(int argc, char** argv) {
    return factorrisk::cli::run(argc, argv);
}
