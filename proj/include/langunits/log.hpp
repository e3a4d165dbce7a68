#pragma once

#include <functional>
#include <iostream>
#include <string_view>

namespace langunits {

using WarningSink = std::function<void(std::string_view)>;

inline WarningSink& warning_sink() {
    static WarningSink sink = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
    return sink;
}

inline void warn(std::string_view msg) {
    if (auto& sink = warning_sink()) sink(msg);
}

/// Swaps the warning sink for the lifetime of the guard (tests, quiet CLI runs).
class ScopedWarningSink {
public:
    explicit ScopedWarningSink(WarningSink sink) : previous_(std::move(warning_sink())) {
        warning_sink() = std::move(sink);
    }
    ~ScopedWarningSink() { warning_sink() = std::move(previous_); }
    ScopedWarningSink(const ScopedWarningSink&) = delete;
    ScopedWarningSink& operator=(const ScopedWarningSink&) = delete;

private:
    WarningSink previous_;
};

} // namespace langunits
