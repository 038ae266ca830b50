#pragma once

#include <exception>
#include <mutex>

namespace leap {

/// Collects the first exception thrown inside an OpenMP region so it can be rethrown
/// once the region has ended.
class ExceptionSlot {
public:
    template <typename F>
    void run(F&& f) noexcept {
        try {
            f();
        } catch (...) {
            std::lock_guard lock(mutex_);
            if (!error_) error_ = std::current_exception();
        }
    }

    void rethrow() const {
        if (error_) std::rethrow_exception(error_);
    }

private:
    std::mutex mutex_;
    std::exception_ptr error_;
};

/// Caps the OpenMP team size; 0 keeps the runtime default.
void set_thread_count(int threads);
/// Threads an upcoming parallel region would use.
int thread_count();

}  // namespace leap
