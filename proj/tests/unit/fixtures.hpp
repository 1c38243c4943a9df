#pragma once

#include <string>

inline std::string fixture_path(const std::string& rel) {
    return std::string(FBDYN_SOURCE_DIR) + "/" + rel;
}
