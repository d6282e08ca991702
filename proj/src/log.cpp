#include "contagion_lens/log.hpp"

#include <iostream>
#include <mutex>

namespace clens {

namespace {
std::mutex sink_mutex;
WarningSink& sink() {
    static WarningSink s = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };
    return s;
}
} // namespace

void set_warning_sink(WarningSink s) {
    std::lock_guard lock(sink_mutex);
    sink() = s ? std::move(s) : [](const std::string&) {};
}

void warn(const std::string& message) {
    std::lock_guard lock(sink_mutex);
    sink()(message);
}

} // namespace clens
