#include "tubeflow/grid.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>

namespace tubeflow {

GridShape::GridShape(std::vector<Axis> axes, std::vector<int> dims)
    : axes_(std::move(axes)), dims_(std::move(dims)) {
  if (axes_.empty() || axes_.size() != dims_.size())
    throw SpecError("grid: axis/dimension count mismatch");
  total_ = 1;
  for (size_t j = 0; j < axes_.size(); ++j) {
    if (!(axes_[j].hi > axes_[j].lo))
      throw SpecError("grid: axis with non-positive length");
    // One-sided second-order stencils need four nodes along an axis.
    if (dims_[j] < 4) throw SpecError("grid: need at least 4 nodes per axis");
    total_ *= dims_[j];
  }
}

double GridShape::spacing(int j) const {
  const Axis& a = axes_[j];
  return a.periodic ? a.length() / dims_[j] : a.length() / (dims_[j] - 1);
}

double GridShape::coord(int j, int i) const {
  return axes_[j].lo + i * spacing(j);
}

int GridShape::flatten(const std::vector<int>& idx) const {
  int flat = 0;
  for (size_t j = 0; j < dims_.size(); ++j) flat = flat * dims_[j] + idx[j];
  return flat;
}

std::vector<int> GridShape::unflatten(int flat) const {
  std::vector<int> idx(dims_.size());
  for (int j = static_cast<int>(dims_.size()) - 1; j >= 0; --j) {
    idx[j] = flat % dims_[j];
    flat /= dims_[j];
  }
  return idx;
}

Vec GridShape::node(int flat) const {
  std::vector<int> idx = unflatten(flat);
  Vec u(rank());
  for (int j = 0; j < rank(); ++j) u[j] = coord(j, idx[j]);
  return u;
}

int GridShape::neighbor(int flat, int axis, int step) const {
  std::vector<int> idx = unflatten(flat);
  int i = idx[axis] + step;
  if (axes_[axis].periodic) {
    i = ((i % dims_[axis]) + dims_[axis]) % dims_[axis];
  } else if (i < 0 || i >= dims_[axis]) {
    return -1;
  }
  idx[axis] = i;
  return flatten(idx);
}

double GridShape::cell_weight(int flat) const {
  std::vector<int> idx = unflatten(flat);
  double w = 1.0;
  for (size_t j = 0; j < dims_.size(); ++j) {
    double h = spacing(static_cast<int>(j));
    if (!axes_[j].periodic && (idx[j] == 0 || idx[j] == dims_[j] - 1))
      w *= 0.5 * h;
    else
      w *= h;
  }
  return w;
}

void GridShape::stencil(int axis, int i, int order, std::vector<int>& offsets,
                        std::vector<double>& coeffs) const {
  const double h = spacing(axis);
  const int n = dims_[axis];
  const bool periodic = axes_[axis].periodic;
  const bool at_lo = !periodic && i == 0;
  const bool at_hi = !periodic && i == n - 1;
  offsets.clear();
  coeffs.clear();
  if (order == 1) {
    if (at_lo) {
      offsets = {0, 1, 2};
      coeffs = {-1.5 / h, 2.0 / h, -0.5 / h};
    } else if (at_hi) {
      offsets = {0, -1, -2};
      coeffs = {1.5 / h, -2.0 / h, 0.5 / h};
    } else {
      offsets = {-1, 1};
      coeffs = {-0.5 / h, 0.5 / h};
    }
  } else if (order == 2) {
    const double h2 = h * h;
    if (at_lo) {
      offsets = {0, 1, 2, 3};
      coeffs = {2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2};
    } else if (at_hi) {
      offsets = {0, -1, -2, -3};
      coeffs = {2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2};
    } else {
      offsets = {-1, 0, 1};
      coeffs = {1.0 / h2, -2.0 / h2, 1.0 / h2};
    }
  } else {
    throw Error("grid: unsupported stencil order");
  }
}

bool GridShape::operator==(const GridShape& other) const {
  if (dims_ != other.dims_ || axes_.size() != other.axes_.size()) return false;
  for (size_t j = 0; j < axes_.size(); ++j) {
    if (axes_[j].lo != other.axes_[j].lo || axes_[j].hi != other.axes_[j].hi ||
        axes_[j].periodic != other.axes_[j].periodic)
      return false;
  }
  return true;
}

namespace {

// Applies a one-dimensional node stencil to the sample columns.
Vec apply_axis_stencil(const GridSamples& gs, int flat, int axis, int order) {
  std::vector<int> idx = gs.shape.unflatten(flat);
  std::vector<int> offsets;
  std::vector<double> coeffs;
  gs.shape.stencil(axis, idx[axis], order, offsets, coeffs);
  Vec out = Vec::Zero(gs.ambient_dim());
  for (size_t t = 0; t < offsets.size(); ++t) {
    int nb = gs.shape.neighbor(flat, axis, offsets[t]);
    if (nb < 0) throw StencilOutOfDomain("grid: stencil leaves the domain");
    out += coeffs[t] * gs.points.col(nb);
  }
  return out;
}

}  // namespace

Mat GridSamples::fd_jacobian(int flat) const {
  Mat J(ambient_dim(), shape.rank());
  for (int j = 0; j < shape.rank(); ++j)
    J.col(j) = apply_axis_stencil(*this, flat, j, 1);
  return J;
}

Vec GridSamples::fd_second(int flat, int a, int b) const {
  if (a == b) return apply_axis_stencil(*this, flat, a, 2);
  // Mixed partial: compose the two first-order stencils.
  std::vector<int> idx = shape.unflatten(flat);
  std::vector<int> offs_a;
  std::vector<double> coef_a;
  shape.stencil(a, idx[a], 1, offs_a, coef_a);
  Vec out = Vec::Zero(ambient_dim());
  for (size_t t = 0; t < offs_a.size(); ++t) {
    int nb = shape.neighbor(flat, a, offs_a[t]);
    if (nb < 0) throw StencilOutOfDomain("grid: stencil leaves the domain");
    out += coef_a[t] * apply_axis_stencil(*this, nb, b, 1);
  }
  return out;
}

double GridSamples::ambient_diameter() const {
  Vec lo = points.rowwise().minCoeff();
  Vec hi = points.rowwise().maxCoeff();
  return (hi - lo).norm();
}

double GridSamples::median_local_spacing() const {
  std::vector<double> d;
  d.reserve(static_cast<size_t>(count()) * shape.rank());
  for (int flat = 0; flat < count(); ++flat) {
    for (int j = 0; j < shape.rank(); ++j) {
      int nb = shape.neighbor(flat, j, 1);
      if (nb >= 0) d.push_back((points.col(nb) - points.col(flat)).norm());
    }
  }
  if (d.empty()) return 0.0;
  size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + mid, d.end());
  return d[mid];
}

double GridSamples::quadrature_weight(int flat) const {
  Mat J = fd_jacobian(flat);
  Mat g = J.transpose() * J;
  double det = g.determinant();
  if (!(det > 0.0))
    throw DegenerateMetric("quadrature: non-positive metric determinant");
  return std::sqrt(det) * shape.cell_weight(flat);
}

void axis_stencil(const Axis& ax, double u, double h, int order,
                  std::vector<int>& offsets, std::vector<double>& coeffs) {
  const double tol = 1e-9 * ax.length();
  auto fits = [&](int off) {
    if (ax.periodic) return true;
    double p = u + off * h;
    return p >= ax.lo - tol && p <= ax.hi + tol;
  };
  offsets.clear();
  coeffs.clear();
  if (order == 1) {
    if (fits(-1) && fits(1)) {
      offsets = {-1, 1};
      coeffs = {-0.5 / h, 0.5 / h};
    } else if (fits(2)) {
      offsets = {0, 1, 2};
      coeffs = {-1.5 / h, 2.0 / h, -0.5 / h};
    } else if (fits(-2)) {
      offsets = {0, -1, -2};
      coeffs = {1.5 / h, -2.0 / h, 0.5 / h};
    } else {
      throw StencilOutOfDomain("finite difference: axis too short for step");
    }
  } else if (order == 2) {
    const double h2 = h * h;
    if (fits(-1) && fits(1)) {
      offsets = {-1, 0, 1};
      coeffs = {1.0 / h2, -2.0 / h2, 1.0 / h2};
    } else if (fits(3)) {
      offsets = {0, 1, 2, 3};
      coeffs = {2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2};
    } else if (fits(-3)) {
      offsets = {0, -1, -2, -3};
      coeffs = {2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2};
    } else {
      throw StencilOutOfDomain("finite difference: axis too short for step");
    }
  } else {
    throw Error("grid: unsupported stencil order");
  }
}

int thread_budget() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("TUBEFLOW_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1 && v < static_cast<long>(hw)) hw = v;
  }
  return static_cast<int>(hw);
}

void parallel_for(int count, const std::function<void(int)>& body) {
  int workers = std::min(thread_budget(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace tubeflow
