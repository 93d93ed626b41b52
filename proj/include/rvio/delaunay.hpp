#pragma once

// Bowyer-Watson triangulation in the plane and barycentric point location.

#include "rvio/geom.hpp"

#include <array>
#include <optional>
#include <vector>

namespace rvio {

using Triangle = std::array<int, 3>;  // indices into the input points, counter-clockwise

namespace detail {

inline double orient2d(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

/// > 0 when d lies strictly inside the circumcircle of the counter-clockwise triangle abc.
inline double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double adx = a.x() - d.x(), ady = a.y() - d.y();
  const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
  const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
  const double ad = adx * adx + ady * ady, bd = bdx * bdx + bdy * bdy, cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

}  // namespace detail

inline std::vector<Triangle> delaunay_facets(const std::vector<Vec2>& pts) {
  const int n = static_cast<int>(pts.size());
  if (n < 3) return {};
  Vec2 lo = pts[0], hi = pts[0];
  for (const auto& p : pts) {
    if (!p.allFinite()) return {};
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double span = std::max((hi - lo).maxCoeff(), 1e-12);
  bool all_collinear = true;
  for (int i = 2; i < n && all_collinear; ++i)
    for (int j = 1; j < i && all_collinear; ++j)
      if (std::abs(detail::orient2d(pts[0], pts[j], pts[i])) > 1e-12 * span * span) all_collinear = false;
  if (all_collinear) return {};

  // Super-triangle vertices are appended after the input points.
  std::vector<Vec2> v = pts;
  const Vec2 mid = 0.5 * (lo + hi);
  const double big = 64.0 * span;
  v.emplace_back(mid.x() - 2.0 * big, mid.y() - big);
  v.emplace_back(mid.x() + 2.0 * big, mid.y() - big);
  v.emplace_back(mid.x(), mid.y() + 2.0 * big);
  std::vector<Triangle> tris{{n, n + 1, n + 2}};

  for (int i = 0; i < n; ++i) {
    const Vec2& p = v[i];
    std::vector<Triangle> keep;
    std::vector<std::array<int, 2>> edges;
    for (const auto& t : tris) {
      if (detail::incircle(v[t[0]], v[t[1]], v[t[2]], p) > 0.0) {
        for (int e = 0; e < 3; ++e) edges.push_back({t[e], t[(e + 1) % 3]});
      } else {
        keep.push_back(t);
      }
    }
    // Boundary of the cavity: edges that appear once.
    for (std::size_t a = 0; a < edges.size(); ++a) {
      bool shared = false;
      for (std::size_t b = 0; b < edges.size(); ++b)
        if (a != b && edges[a][0] == edges[b][1] && edges[a][1] == edges[b][0]) {
          shared = true;
          break;
        }
      if (!shared) keep.push_back({edges[a][0], edges[a][1], i});
    }
    tris = std::move(keep);
  }

  std::vector<Triangle> out;
  for (const auto& t : tris)
    if (t[0] < n && t[1] < n && t[2] < n && detail::orient2d(v[t[0]], v[t[1]], v[t[2]]) > 0.0) out.push_back(t);
  return out;
}

inline Vec3 barycentric(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p) {
  const double den = detail::orient2d(a, b, c);
  const double l1 = detail::orient2d(p, b, c) / den;
  const double l2 = detail::orient2d(a, p, c) / den;
  return {l1, l2, 1.0 - l1 - l2};
}

/// Index of the first triangle containing p, or nullopt.
inline std::optional<int> select_facet(const std::vector<Triangle>& tris, const std::vector<Vec2>& pts,
                                       const Vec2& p) {
  for (int k = 0; k < static_cast<int>(tris.size()); ++k) {
    const auto& t = tris[k];
    const Vec3 l = barycentric(pts[t[0]], pts[t[1]], pts[t[2]], p);
    if (l.allFinite() && l.minCoeff() >= -1e-12) return k;
  }
  return std::nullopt;
}

}  // namespace rvio
