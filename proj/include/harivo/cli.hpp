#pragma once

#include <string>
#include <vector>

namespace harivo {

// Exit codes: 0 success, 1 runtime error, 2 usage error.
int cli(int argc, char** argv);
int cli(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace harivo
