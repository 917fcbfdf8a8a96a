#pragma once

#include <memory>
#include <vector>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

namespace irregular_sde {

namespace quad_detail {

// GSL workspaces are reused per thread; a small stack supports the nested
// integrals of the 2-d convolutions.
class WorkspacePool {
 public:
  gsl_integration_workspace* acquire() {
    if (free_.empty())
      free_.push_back(gsl_integration_workspace_alloc(kLimit));
    gsl_integration_workspace* w = free_.back();
    free_.pop_back();
    return w;
  }
  void release(gsl_integration_workspace* w) { free_.push_back(w); }
  ~WorkspacePool() {
    for (auto* w : free_) gsl_integration_workspace_free(w);
  }
  static constexpr std::size_t kLimit = 5000;

 private:
  std::vector<gsl_integration_workspace*> free_;
};

inline WorkspacePool& pool() {
  thread_local WorkspacePool p;
  return p;
}

inline bool disable_gsl_abort() {
  gsl_set_error_handler_off();
  return true;
}

template <class F>
double call_thunk(double x, void* params) {
  return (*static_cast<F*>(params))(x);
}

}  // namespace quad_detail

// Globally adaptive Gauss-Kronrod (QUADPACK QAG, 15-point rule). Global
// adaptivity matters here: several integrands have jump discontinuities, and
// budget-halving bisection schemes degenerate on those while a worst-first
// heap refines only the offending cells.
template <class F>
double integrate(F&& f, double a, double b, double abs_tol = 1e-10,
                 double rel_tol = 1e-10) {
  if (a == b) return 0.0;
  static const bool handler_off = quad_detail::disable_gsl_abort();
  (void)handler_off;
  using Fn = std::remove_reference_t<F>;
  gsl_function gf;
  gf.function = &quad_detail::call_thunk<Fn>;
  gf.params = const_cast<void*>(static_cast<const void*>(&f));
  gsl_integration_workspace* w = quad_detail::pool().acquire();
  double result = 0.0, abserr = 0.0;
  gsl_integration_qag(&gf, a, b, abs_tol, rel_tol,
                      quad_detail::WorkspacePool::kLimit, GSL_INTEG_GAUSS15, w,
                      &result, &abserr);
  quad_detail::pool().release(w);
  // Roundoff-limited subdivisions still return the best available estimate;
  // the report-level tolerances are far above machine precision.
  return result;
}

}  // namespace irregular_sde
