#include "dfdgcn/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace dfdgcn {

std::size_t default_threads() {
	if (const char *env = std::getenv("DFDGCN_THREADS")) {
		try {
			const long v = std::stol(env);
			if (v > 0)
				return static_cast<std::size_t>(v);
		} catch (const std::exception &) {
		}
	}
	return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)> &fn) {
	if (threads == 0)
		threads = default_threads();
	threads = std::min(threads, n);
	if (threads <= 1) {
		for (std::size_t i = 0; i < n; ++i)
			fn(i);
		return;
	}
	std::atomic<std::size_t> next{0};
	std::atomic<bool> failed{false};
	std::exception_ptr error;
	std::mutex error_mutex;
	auto worker = [&] {
		for (;;) {
			const std::size_t i = next.fetch_add(1);
			if (i >= n || failed.load())
				return;
			try {
				fn(i);
			} catch (...) {
				std::lock_guard lock(error_mutex);
				if (!error)
					error = std::current_exception();
				failed = true;
				return;
			}
		}
	};
	std::vector<std::thread> pool;
	for (std::size_t t = 1; t < threads; ++t)
		pool.emplace_back(worker);
	worker();
	for (auto &th : pool)
		th.join();
	if (error)
		std::rethrow_exception(error);
}

} // namespace dfdgcn
