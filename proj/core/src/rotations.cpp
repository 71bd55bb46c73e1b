#include "spi/rotations.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "spi/errors.hpp"

namespace spi {

std::size_t RotationSet::nearest(const Quat& q) const {
  std::size_t best = 0;
  double best_dot = -1.0;
  for (std::size_t i = 0; i < quaternions.size(); ++i) {
    const Quat& s = quaternions[i];
    const double d = std::abs(q.w * s.w + q.x * s.x + q.y * s.y + q.z * s.z);
    if (d > best_dot) {
      best_dot = d;
      best = i;
    }
  }
  return best;
}

namespace {

using Q4 = std::array<double, 4>;

double dot4(const Q4& a, const Q4& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3];
}

Q4 normalize4(const Q4& a) {
  const double n = std::sqrt(dot4(a, a));
  return {a[0] / n, a[1] / n, a[2] / n, a[3] / n};
}

// The 120 unit quaternions of the 600-cell (binary icosahedral group).
std::vector<Q4> cell600_vertices() {
  std::vector<Q4> v;
  v.reserve(120);
  // (+-1, 0, 0, 0) and permutations
  for (int axis = 0; axis < 4; ++axis)
    for (int s = -1; s <= 1; s += 2) {
      Q4 q{0, 0, 0, 0};
      q[axis] = s;
      v.push_back(q);
    }
  // (+-1/2, +-1/2, +-1/2, +-1/2)
  for (int a = -1; a <= 1; a += 2)
    for (int b = -1; b <= 1; b += 2)
      for (int c = -1; c <= 1; c += 2)
        for (int d = -1; d <= 1; d += 2)
          v.push_back({0.5 * a, 0.5 * b, 0.5 * c, 0.5 * d});
  // Even permutations of (+-phi, +-1, +-1/phi, 0) / 2
  const double phi = 0.5 * (1.0 + std::sqrt(5.0));
  const int even_perms[12][4] = {
      {0, 1, 2, 3}, {0, 2, 3, 1}, {0, 3, 1, 2}, {1, 0, 3, 2},
      {1, 2, 0, 3}, {1, 3, 2, 0}, {2, 0, 1, 3}, {2, 1, 3, 0},
      {2, 3, 0, 1}, {3, 0, 2, 1}, {3, 1, 0, 2}, {3, 2, 1, 0}};
  for (const auto& p : even_perms)
    for (int a = -1; a <= 1; a += 2)
      for (int b = -1; b <= 1; b += 2)
        for (int c = -1; c <= 1; c += 2) {
          Q4 q;
          q[p[0]] = 0.5 * phi * a;
          q[p[1]] = 0.5 * b;
          q[p[2]] = 0.5 / phi * c;
          q[p[3]] = 0.0;
          v.push_back(q);
        }
  return v;
}

// 4-vertex cells of the 600-cell: 4-cliques of the adjacency graph where
// adjacent vertices have dot product cos(36 deg) = phi/2.
std::vector<std::array<int, 4>> cell600_cells(const std::vector<Q4>& verts) {
  const double phi = 0.5 * (1.0 + std::sqrt(5.0));
  const double adj = 0.5 * phi;
  const int n = static_cast<int>(verts.size());
  std::vector<std::vector<int>> nbr(n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (std::abs(dot4(verts[i], verts[j]) - adj) < 1e-9) {
        nbr[i].push_back(j); // only forward neighbors: j > i
      }
  std::vector<std::array<int, 4>> cells;
  for (int a = 0; a < n; ++a)
    for (std::size_t bi = 0; bi < nbr[a].size(); ++bi) {
      const int b = nbr[a][bi];
      for (std::size_t ci = bi + 1; ci < nbr[a].size(); ++ci) {
        const int c = nbr[a][ci];
        if (std::abs(dot4(verts[b], verts[c]) - adj) >= 1e-9) continue;
        for (std::size_t di = ci + 1; di < nbr[a].size(); ++di) {
          const int d = nbr[a][di];
          if (std::abs(dot4(verts[b], verts[d]) - adj) >= 1e-9) continue;
          if (std::abs(dot4(verts[c], verts[d]) - adj) >= 1e-9) continue;
          cells.push_back({a, b, c, d});
        }
      }
    }
  return cells;
}

// Euclidean 3-volume of the tetrahedron spanned by four points in R^4.
double tet_volume(const Q4& p0, const Q4& p1, const Q4& p2, const Q4& p3) {
  double e[3][4];
  for (int k = 0; k < 4; ++k) {
    e[0][k] = p1[k] - p0[k];
    e[1][k] = p2[k] - p0[k];
    e[2][k] = p3[k] - p0[k];
  }
  double g[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      g[i][j] = e[i][0] * e[j][0] + e[i][1] * e[j][1] + e[i][2] * e[j][2] +
                e[i][3] * e[j][3];
  const double det = g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1]) -
                     g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0]) +
                     g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0]);
  return det > 0.0 ? std::sqrt(det) / 6.0 : 0.0;
}

struct KeyHash {
  std::size_t operator()(const std::array<std::int64_t, 4>& k) const {
    std::size_t h = 1469598103934665603ULL;
    for (std::int64_t v : k) {
      h ^= static_cast<std::size_t>(v);
      h *= 1099511628211ULL;
    }
    return h;
  }
};

} // namespace

RotationSet sample_rotations(int num_div) {
  if (num_div < 1) throw ConfigError("num_div must be >= 1");
  const int n = num_div;
  const auto verts = cell600_vertices();
  const auto cells = cell600_cells(verts);
  if (cells.size() != 600)
    throw StageError("600-cell construction produced " +
                     std::to_string(cells.size()) + " cells");

  // Sample registry with antipodal dedup through quantized canonical keys.
  std::unordered_map<std::array<std::int64_t, 4>, int, KeyHash> registry;
  std::vector<Q4> samples;
  std::vector<double> weights;

  auto intern = [&](const Q4& p) -> int {
    constexpr double kQuantum = 1e9;
    std::array<std::int64_t, 4> key{};
    for (int k = 0; k < 4; ++k) key[k] = std::llround(p[k] * kQuantum);
    // canonical antipode: first nonzero quantized component positive
    bool flip = false;
    for (int k = 0; k < 4; ++k) {
      if (key[k] != 0) {
        flip = key[k] < 0;
        break;
      }
    }
    Q4 c = p;
    if (flip)
      for (int k = 0; k < 4; ++k) {
        key[k] = -key[k];
        c[k] = -c[k];
      }
    auto it = registry.find(key);
    if (it != registry.end()) return it->second;
    const int id = static_cast<int>(samples.size());
    registry.emplace(key, id);
    samples.push_back(c);
    weights.push_back(0.0);
    return id;
  };

  std::vector<int> point_id;  // per-cell scratch, indexed densely
  std::vector<Q4> point_pos;  // cell-local projected points (no antipode flip)
  for (const auto& cell : cells) {
    const Q4& v0 = verts[cell[0]];
    const Q4& v1 = verts[cell[1]];
    const Q4& v2 = verts[cell[2]];
    const Q4& v3 = verts[cell[3]];

    // dense index for (i,j,k), i+j+k <= n (l = n-i-j-k)
    auto didx = [n](int i, int j, int k) {
      int base = 0;
      for (int a = 0; a < i; ++a) base += (n - a + 1) * (n - a + 2) / 2;
      const int m = n - i;
      return base + (j * (2 * m - j + 3)) / 2 + k;
    };

    const int total = (n + 1) * (n + 2) * (n + 3) / 6;
    point_id.assign(total, -1);
    point_pos.assign(total, Q4{});
    for (int i = 0; i <= n; ++i)
      for (int j = 0; i + j <= n; ++j)
        for (int k = 0; i + j + k <= n; ++k) {
          const int l = n - i - j - k;
          Q4 p;
          for (int t = 0; t < 4; ++t)
            p[t] = (i * v0[t] + j * v1[t] + k * v2[t] + l * v3[t]) / n;
          p = normalize4(p);
          point_id[didx(i, j, k)] = intern(p);
          point_pos[didx(i, j, k)] = p;
        }

    auto pid = [&](int i, int j, int k) { return didx(i, j, k); };
    // Volumes come from the cell-local projected points; the share goes to
    // the canonical (possibly antipode-flipped) sample.
    auto add_tet = [&](int a, int b, int c, int d) {
      const double vol =
          tet_volume(point_pos[a], point_pos[b], point_pos[c], point_pos[d]);
      const double share = vol / 4.0;
      weights[point_id[a]] += share;
      weights[point_id[b]] += share;
      weights[point_id[c]] += share;
      weights[point_id[d]] += share;
    };

    // Upward tetrahedra: x with |x| = n-1.
    for (int i = 0; i + 1 <= n; ++i)
      for (int j = 0; i + j + 1 <= n; ++j)
        for (int k = 0; i + j + k + 1 <= n; ++k) {
          add_tet(pid(i + 1, j, k), pid(i, j + 1, k), pid(i, j, k + 1),
                  pid(i, j, k));
        }
    // Octahedra (split into 4 tets around one diagonal): x with |x| = n-2.
    for (int i = 0; i + 2 <= n; ++i)
      for (int j = 0; i + j + 2 <= n; ++j)
        for (int k = 0; i + j + k + 2 <= n; ++k) {
          const int v12 = pid(i + 1, j + 1, k);
          const int v13 = pid(i + 1, j, k + 1);
          const int v14 = pid(i + 1, j, k);
          const int v23 = pid(i, j + 1, k + 1);
          const int v24 = pid(i, j + 1, k);
          const int v34 = pid(i, j, k + 1);
          add_tet(v12, v34, v13, v14);
          add_tet(v12, v34, v14, v24);
          add_tet(v12, v34, v24, v23);
          add_tet(v12, v34, v23, v13);
        }
    // Downward tetrahedra: x with |x| = n-3.
    for (int i = 0; i + 3 <= n; ++i)
      for (int j = 0; i + j + 3 <= n; ++j)
        for (int k = 0; i + j + k + 3 <= n; ++k) {
          add_tet(pid(i, j + 1, k + 1), pid(i + 1, j, k + 1),
                  pid(i + 1, j + 1, k), pid(i + 1, j + 1, k + 1));
        }
  }

  RotationSet set;
  set.num_div = num_div;
  set.quaternions.reserve(samples.size());
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  set.weights.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Q4 q = normalize4(samples[i]);
    set.quaternions.push_back(Quat{q[0], q[1], q[2], q[3]});
    set.weights.push_back(weights[i] / wsum);
  }
  return set;
}

RotationSet read_rotations(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError(path + ": cannot open");
  RotationSet set;
  set.num_div = 0;
  std::string line;
  bool any_weight = false;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double w, x, y, z, wt;
    if (!(ss >> w >> x >> y >> z))
      throw FormatError(path + ": malformed rotation line: " + line);
    Quat q{w, x, y, z};
    if (std::abs(q.norm() - 1.0) > 1e-6)
      throw FormatError(path + ": quaternion not unit norm: " + line);
    set.quaternions.push_back(q.normalized().canonical());
    if (ss >> wt) {
      if (wt <= 0.0) throw FormatError(path + ": nonpositive weight");
      set.weights.push_back(wt);
      any_weight = true;
    } else {
      set.weights.push_back(1.0);
    }
  }
  if (set.quaternions.empty()) throw FormatError(path + ": no rotations");
  (void)any_weight;
  double sum = 0.0;
  for (double w : set.weights) sum += w;
  for (double& w : set.weights) w /= sum;
  return set;
}

void write_rotations(const RotationSet& set, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw FormatError(path + ": cannot open for writing");
  f.precision(17);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Quat& q = set.quaternions[i];
    f << q.w << ' ' << q.x << ' ' << q.y << ' ' << q.z << ' ' << set.weights[i]
      << '\n';
  }
}

} // namespace spi
