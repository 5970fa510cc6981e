#include <iostream>
#include <mutex>

#include "rpbg/errors.hpp"

namespace rpbg {

namespace {
bool g_quiet = false;
std::mutex g_log_mutex;
}  // namespace

void log_warn(std::string_view msg) {
    if (g_quiet) return;
    std::lock_guard lock(g_log_mutex);
    std::cerr << "warning: " << msg << '\n';
}

void log_info(std::string_view msg) {
    if (g_quiet) return;
    std::lock_guard lock(g_log_mutex);
    std::cerr << msg << '\n';
}

void set_log_quiet(bool quiet) { g_quiet = quiet; }

}  // namespace rpbg
