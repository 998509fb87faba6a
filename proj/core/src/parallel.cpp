#include "saapde/parallel.hpp"

#include <charconv>
#include <cstdlib>
#include <string_view>

#include "saapde/errors.hpp"

namespace saapde {

std::size_t resolve_threads(std::optional<std::size_t> requested) {
    if (requested) {
        if (*requested == 0) throw ValidationError("thread count must be positive");
        return *requested;
    }
    if (const char* env = std::getenv("SAA_PDE_THREADS"); env && *env) {
        const std::string_view text(env);
        std::size_t value = 0;
        const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc{} || end != text.data() + text.size() || value == 0)
            throw ValidationError("SAA_PDE_THREADS must be a positive integer, got '" + std::string(text) + "'");
        return value;
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

}  // namespace saapde
