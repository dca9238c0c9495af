#pragma once

#include <string>

namespace testpaths {

std::string source_dir();
std::string binary_dir();
std::string fixture(const std::string& relative);
// scratch directory under the build tree, created (and wiped) on demand
std::string fresh_temp_dir(const std::string& name);
std::string cli_binary();

}  // namespace testpaths
