#include "needle/parallel.hpp"

#include <atomic>
#include <thread>

namespace needle {
namespace {
std::atomic<int> g_threads{std::max(1, static_cast<int>(std::thread::hardware_concurrency()))};
}

void set_thread_count(int n) { g_threads.store(std::max(1, n)); }
int thread_count() { return g_threads.load(); }

}  // namespace needle
