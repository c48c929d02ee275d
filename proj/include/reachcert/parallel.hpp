#pragma once

namespace reachcert {

// Number of OpenMP workers used by the parallel kernels. Results never depend
// on this value; only wall time does.
void set_workers(int n);
int workers();

// Restores the previous worker count on scope exit.
class ScopedWorkers {
 public:
  explicit ScopedWorkers(int n) : previous_(workers()) { set_workers(n); }
  ~ScopedWorkers() { set_workers(previous_); }
  ScopedWorkers(const ScopedWorkers&) = delete;
  ScopedWorkers& operator=(const ScopedWorkers&) = delete;

 private:
  int previous_;
};

}  // namespace reachcert
