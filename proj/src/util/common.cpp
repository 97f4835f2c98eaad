#include "tcdrguard/common.hpp"

#include <cstdio>

namespace tcdr {

std::string hex64(uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace tcdr
