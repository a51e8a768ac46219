#pragma once

#include <stdexcept>
#include <string>

namespace cultprobe {

// Every failure the toolkit reports is an Error carrying a human-readable
// message that names the offending id, key or path.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cultprobe
