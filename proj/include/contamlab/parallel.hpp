#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace contamlab {

/// Execution mode of the data-parallel kernels. Both modes produce
/// bit-identical results: work items write disjoint outputs and every
/// floating-point reduction runs serially in item order afterwards.
enum class Exec { serial, parallel };

int max_threads();
void set_threads(int n);

// Runs f(i) for i in [0, n). The first exception (lowest i) is rethrown after
// all items finish.
template <typename F>
void for_each_index(std::size_t n, Exec exec, F&& f)
{
    if (exec == Exec::serial || n < 2) {
        for (std::size_t i = 0; i < n; ++i) {
            f(i);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 4)
    for (long long i = 0; i < count; ++i) {
        try {
            f(static_cast<std::size_t>(i));
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

}  // namespace contamlab
