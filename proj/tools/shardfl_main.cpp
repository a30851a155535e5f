#include "shardfl/cli.hpp"

int main(int argc, char** argv) {
    return shardfl::cli::run({argv + 1, argv + argc});
}
