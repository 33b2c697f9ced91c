// Deterministic parallel index sweeps: results never depend on the
// schedule because every slot is computed into its own table entry and
// reductions run serially over the table. A serial reference path is kept
// selectable at runtime for testing and benchmarking.
#ifndef PQ_PARALLEL_HPP
#define PQ_PARALLEL_HPP

#include <functional>

namespace pq::par {

// True when the library was built with OpenMP, PQ_FORCE_SERIAL is not set
// in the environment, and force_serial(true) has not been called.
bool parallel_enabled();

// Runtime override; returns the previous setting. force_serial(false) still
// honors the PQ_FORCE_SERIAL environment variable.
bool force_serial(bool on);

// Worker count the parallel path would use (1 on the serial path).
int worker_count();

// fn(i) for i in [0, count), in parallel when enabled. fn must not touch
// shared mutable state without its own synchronization. The first exception
// thrown by any slot is rethrown after the sweep completes.
void for_index(int count, const std::function<void(int)>& fn);

// max_i fn(i), computed slot-wise and reduced serially; -inf on an empty
// range so callers can fold it into further maxima.
double max_index(int count, const std::function<double(int)>& fn);

}  // namespace pq::par

#endif
