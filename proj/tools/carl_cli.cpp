#include "commands.hpp"

int main(int argc, char** argv) { return carl::app::run(argc, argv); }
