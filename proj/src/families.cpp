#include <cmath>

#include "tubeflow/manifold.hpp"

namespace tubeflow {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

ChartedManifold ChartedManifold::circle(double radius, int n, double cx,
                                        double cy) {
  if (!(radius > 0.0)) throw SpecError("circle: radius must be positive");
  GridShape shape({{0.0, kTwoPi, true}}, {n});
  auto eval = [radius, cx, cy](const Vec& u) {
    Vec x(2);
    x << cx + radius * std::cos(u[0]), cy + radius * std::sin(u[0]);
    return x;
  };
  auto jac = [radius](const Vec& u) {
    Mat J(2, 1);
    J << -radius * std::sin(u[0]), radius * std::cos(u[0]);
    return J;
  };
  auto second = [radius](const Vec& u, int, int) {
    Vec s(2);
    s << -radius * std::cos(u[0]), -radius * std::sin(u[0]);
    return s;
  };
  ChartedManifold m = from_closures(std::move(shape), 2, eval, jac, second,
                                    "circle");
  m.set_outward_hint([](const Vec& u) {
    Vec d(2);
    d << std::cos(u[0]), std::sin(u[0]);
    return d;
  });
  return m;
}

ChartedManifold ChartedManifold::ellipse(double a, double b, int n) {
  if (!(a > 0.0) || !(b > 0.0))
    throw SpecError("ellipse: semi-axes must be positive");
  GridShape shape({{0.0, kTwoPi, true}}, {n});
  auto eval = [a, b](const Vec& u) {
    Vec x(2);
    x << a * std::cos(u[0]), b * std::sin(u[0]);
    return x;
  };
  auto jac = [a, b](const Vec& u) {
    Mat J(2, 1);
    J << -a * std::sin(u[0]), b * std::cos(u[0]);
    return J;
  };
  auto second = [a, b](const Vec& u, int, int) {
    Vec s(2);
    s << -a * std::cos(u[0]), -b * std::sin(u[0]);
    return s;
  };
  ChartedManifold m = from_closures(std::move(shape), 2, eval, jac, second,
                                    "ellipse");
  m.set_outward_hint([a, b](const Vec& u) {
    Vec d(2);
    d << b * std::cos(u[0]), a * std::sin(u[0]);
    return d;
  });
  return m;
}

ChartedManifold ChartedManifold::sphere(double radius, int nu, int nv,
                                        double pole_inset) {
  if (!(radius > 0.0)) throw SpecError("sphere: radius must be positive");
  if (!(pole_inset > 0.0) || !(pole_inset < 1.5))
    throw SpecError("sphere: pole inset must lie in (0, pi/2)");
  GridShape shape({{0.0, kTwoPi, true},
                   {pole_inset, kTwoPi / 2.0 - pole_inset, false}},
                  {nu, nv});
  const double R = radius;
  auto eval = [R](const Vec& u) {
    Vec x(3);
    x << R * std::sin(u[1]) * std::cos(u[0]),
        R * std::sin(u[1]) * std::sin(u[0]), R * std::cos(u[1]);
    return x;
  };
  auto jac = [R](const Vec& u) {
    double cu = std::cos(u[0]), su = std::sin(u[0]);
    double cv = std::cos(u[1]), sv = std::sin(u[1]);
    Mat J(3, 2);
    J << -R * sv * su, R * cv * cu, R * sv * cu, R * cv * su, 0.0, -R * sv;
    return J;
  };
  auto second = [R](const Vec& u, int a, int b) {
    double cu = std::cos(u[0]), su = std::sin(u[0]);
    double cv = std::cos(u[1]), sv = std::sin(u[1]);
    Vec s(3);
    if (a == 0 && b == 0)
      s << -R * sv * cu, -R * sv * su, 0.0;
    else if (a == 1 && b == 1)
      s << -R * sv * cu, -R * sv * su, -R * cv;
    else
      s << -R * cv * su, R * cv * cu, 0.0;
    return s;
  };
  ChartedManifold m = from_closures(std::move(shape), 3, eval, jac, second,
                                    "sphere");
  m.set_outward_hint([](const Vec& u) {
    Vec d(3);
    d << std::sin(u[1]) * std::cos(u[0]), std::sin(u[1]) * std::sin(u[0]),
        std::cos(u[1]);
    return d;
  });
  return m;
}

ChartedManifold ChartedManifold::torus(double ring_radius, double tube_radius,
                                       int nu, int nv) {
  if (!(tube_radius > 0.0) || !(ring_radius > tube_radius))
    throw SpecError("torus: need ring radius > tube radius > 0");
  GridShape shape({{0.0, kTwoPi, true}, {0.0, kTwoPi, true}}, {nu, nv});
  const double R = ring_radius, r = tube_radius;
  auto eval = [R, r](const Vec& u) {
    double w = R + r * std::cos(u[1]);
    Vec x(3);
    x << w * std::cos(u[0]), w * std::sin(u[0]), r * std::sin(u[1]);
    return x;
  };
  auto jac = [R, r](const Vec& u) {
    double cu = std::cos(u[0]), su = std::sin(u[0]);
    double cv = std::cos(u[1]), sv = std::sin(u[1]);
    double w = R + r * cv;
    Mat J(3, 2);
    J << -w * su, -r * sv * cu, w * cu, -r * sv * su, 0.0, r * cv;
    return J;
  };
  auto second = [R, r](const Vec& u, int a, int b) {
    double cu = std::cos(u[0]), su = std::sin(u[0]);
    double cv = std::cos(u[1]), sv = std::sin(u[1]);
    double w = R + r * cv;
    Vec s(3);
    if (a == 0 && b == 0)
      s << -w * cu, -w * su, 0.0;
    else if (a == 1 && b == 1)
      s << -r * cv * cu, -r * cv * su, -r * sv;
    else
      s << r * sv * su, -r * sv * cu, 0.0;
    return s;
  };
  ChartedManifold m = from_closures(std::move(shape), 3, eval, jac, second,
                                    "torus");
  // Outward means away from the core circle of the tube, not away from the
  // centroid (those disagree on the inner equator).
  m.set_outward_hint([](const Vec& u) {
    Vec d(3);
    d << std::cos(u[1]) * std::cos(u[0]), std::cos(u[1]) * std::sin(u[0]),
        std::sin(u[1]);
    return d;
  });
  return m;
}

ChartedManifold ChartedManifold::graph(const std::string& field,
                                       const std::vector<Axis>& box,
                                       const std::vector<int>& dims,
                                       double field_param) {
  const int k = static_cast<int>(box.size());
  GridShape shape(box, dims);
  for (int j = 0; j < k; ++j)
    if (shape.axis(j).periodic)
      throw SpecError("graph: box axes must be non-periodic");

  // f, its gradient, and its Hessian entry (a, b).
  std::function<double(const Vec&)> f;
  std::function<Vec(const Vec&)> grad;
  std::function<double(const Vec&, int, int)> hess;
  const double c = field_param;
  if (field == "zero") {
    f = [](const Vec&) { return 0.0; };
    grad = [k](const Vec&) { return Vec(Vec::Zero(k)); };
    hess = [](const Vec&, int, int) { return 0.0; };
  } else if (field == "paraboloid") {
    f = [c](const Vec& u) { return 0.5 * c * u.squaredNorm(); };
    grad = [c](const Vec& u) { return Vec(c * u); };
    hess = [c](const Vec&, int a, int b) { return a == b ? c : 0.0; };
  } else if (field == "sphere_cap") {
    if (!(c > 0.0)) throw SpecError("graph: sphere_cap needs a positive radius");
    // The cap chart needs the whole box strictly inside |u| < radius.
    double corner = 0.0;
    for (int j = 0; j < k; ++j) {
      double m = std::max(std::abs(box[j].lo), std::abs(box[j].hi));
      corner += m * m;
    }
    if (!(corner < c * c))
      throw SpecError("graph: box extends past the sphere_cap radius");
    f = [c](const Vec& u) { return std::sqrt(c * c - u.squaredNorm()); };
    grad = [c](const Vec& u) {
      return Vec(-u / std::sqrt(c * c - u.squaredNorm()));
    };
    hess = [c](const Vec& u, int a, int b) {
      double fv = std::sqrt(c * c - u.squaredNorm());
      double d = a == b ? -1.0 / fv : 0.0;
      return d - u[a] * u[b] / (fv * fv * fv);
    };
  } else {
    throw SpecError("graph: unknown field \"" + field + "\"");
  }

  auto eval = [k, f](const Vec& u) {
    Vec x(k + 1);
    x.head(k) = u;
    x[k] = f(u);
    return x;
  };
  auto jac = [k, grad](const Vec& u) {
    Mat J = Mat::Zero(k + 1, k);
    J.topRows(k) = Mat::Identity(k, k);
    J.row(k) = grad(u).transpose();
    return J;
  };
  auto second = [k, hess](const Vec& u, int a, int b) {
    Vec s = Vec::Zero(k + 1);
    s[k] = hess(u, a, b);
    return s;
  };
  ChartedManifold m = from_closures(std::move(shape), k + 1, eval, jac, second,
                                    "graph");
  m.set_outward_hint([k, grad](const Vec& u) {
    Vec d(k + 1);
    d.head(k) = -grad(u);
    d[k] = 1.0;
    return d;
  });
  return m;
}

}  // namespace tubeflow
