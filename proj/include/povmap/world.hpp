#pragma once

// Synthetic geospatial world: terrain classes, nighttime-light intensity
// (0..63), and a latent poverty field on a flat grid of 1 km cells, plus a
// procedural renderer for daytime tiles.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <queue>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "povmap/image.hpp"
#include "povmap/noise.hpp"
#include "povmap/seed.hpp"

namespace povmap {

enum class Terrain : std::uint8_t { water = 0, forest = 1, barren = 2, farmland = 3, road = 4, urban = 5 };

inline constexpr std::array<Terrain, 6> kAllTerrains{Terrain::water, Terrain::forest,
                                                     Terrain::barren, Terrain::farmland,
                                                     Terrain::road, Terrain::urban};

inline std::string_view to_string(Terrain t) {
  switch (t) {
    case Terrain::water: return "water";
    case Terrain::forest: return "forest";
    case Terrain::barren: return "barren";
    case Terrain::farmland: return "farmland";
    case Terrain::road: return "road";
    case Terrain::urban: return "urban";
  }
  return "?";
}

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

struct WorldOptions {
  std::size_t side = 256;
  std::uint64_t seed = 1;
  double zero_light_quantile = 0.6;  // share of cells with development below the lit threshold
  bool label_noise = false;          // perturb intensities to mimic imagery/lights date mismatch
};

struct World {
  std::size_t side = 0;
  std::uint64_t seed = 0;
  WorldOptions options;
  std::vector<Terrain> terrain;
  std::vector<std::uint8_t> intensity;  // 0..63
  std::vector<float> poverty;           // latent in [0, 1]
  std::vector<float> development;       // settlement density in [0, 1], drives imagery
  std::vector<float> road_distance;     // cells to nearest road cell
  std::vector<float> market_distance;   // cells to nearest urban cell
  std::vector<float> temperature;
  std::vector<float> precipitation;
  std::vector<float> road_angle;        // radians, meaningful on road cells
  std::vector<Cell> survey_sites;

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * side + static_cast<std::size_t>(x);
  }
  bool in_bounds(int x, int y) const {
    return x >= 0 && y >= 0 && static_cast<std::size_t>(x) < side &&
           static_cast<std::size_t>(y) < side;
  }
  Terrain terrain_at(int x, int y) const { return terrain[index(x, y)]; }
  int intensity_at(int x, int y) const { return intensity[index(x, y)]; }
};

namespace detail_world {

// Two-pass chamfer distance (1, sqrt 2) from all source cells.
inline std::vector<float> distance_transform(std::size_t side, const std::vector<bool>& source) {
  const float inf = std::numeric_limits<float>::max() / 4;
  const float diag = std::sqrt(2.0f);
  std::vector<float> d(side * side, inf);
  for (std::size_t i = 0; i < d.size(); ++i)
    if (source[i]) d[i] = 0;
  const long n = static_cast<long>(side);
  auto at = [&](long x, long y) -> float& { return d[static_cast<std::size_t>(y * n + x)]; };
  for (long y = 0; y < n; ++y)
    for (long x = 0; x < n; ++x) {
      float& v = at(x, y);
      if (x > 0) v = std::min(v, at(x - 1, y) + 1);
      if (y > 0) v = std::min(v, at(x, y - 1) + 1);
      if (x > 0 && y > 0) v = std::min(v, at(x - 1, y - 1) + diag);
      if (x + 1 < n && y > 0) v = std::min(v, at(x + 1, y - 1) + diag);
    }
  for (long y = n; y-- > 0;)
    for (long x = n; x-- > 0;) {
      float& v = at(x, y);
      if (x + 1 < n) v = std::min(v, at(x + 1, y) + 1);
      if (y + 1 < n) v = std::min(v, at(x, y + 1) + 1);
      if (x + 1 < n && y + 1 < n) v = std::min(v, at(x + 1, y + 1) + diag);
      if (x > 0 && y + 1 < n) v = std::min(v, at(x - 1, y + 1) + diag);
    }
  for (auto& v : d)
    if (v >= inf) v = static_cast<float>(2 * side);
  return d;
}

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const std::size_t k = std::min(v.size() - 1, static_cast<std::size_t>(q * v.size()));
  return v[k];
}

}  // namespace detail_world

/// Deterministic in (seed, side).
inline World generate_world(const WorldOptions& opt) {
  require(opt.side >= 32, ErrorKind::invalid_argument,
          "world side must be at least 32 cells, got " + std::to_string(opt.side));
  const std::size_t S = opt.side;
  const std::size_t N = S * S;
  World w;
  w.side = S;
  w.seed = opt.seed;
  w.options = opt;
  std::mt19937_64 rng(derive_seed(opt.seed, "world/layout"));

  std::vector<double> elevation(N), moisture(N), settle(N), hidden(N);
  for (std::size_t y = 0; y < S; ++y)
    for (std::size_t x = 0; x < S; ++x) {
      const std::size_t i = y * S + x;
      const double fx = static_cast<double>(x), fy = static_cast<double>(y);
      elevation[i] = noise::fbm(derive_seed(opt.seed, "world/elevation"), fx, fy, 40.0, 3);
      moisture[i] = noise::fbm(derive_seed(opt.seed, "world/moisture"), fx, fy, 24.0, 3);
      settle[i] = noise::fbm(derive_seed(opt.seed, "world/settle"), fx, fy, 14.0, 3);
      hidden[i] = noise::fbm(derive_seed(opt.seed, "world/hidden"), fx, fy, 10.0, 2);
    }
  noise::rank_normalize(elevation);
  noise::rank_normalize(moisture);
  noise::rank_normalize(settle);
  noise::rank_normalize(hidden);

  std::vector<bool> water(N);
  for (std::size_t i = 0; i < N; ++i) water[i] = elevation[i] < 0.08;

  // Cities: gaussian-profile blobs on land.
  struct City {
    double x, y, r;
  };
  std::vector<City> cities;
  const std::size_t n_cities = std::max<std::size_t>(3, N / 5000);
  std::uniform_real_distribution<double> ucoord(2.0, static_cast<double>(S) - 3.0);
  std::uniform_real_distribution<double> uradius(2.0, 5.5);
  for (std::size_t tries = 0; cities.size() < n_cities && tries < 10000; ++tries) {
    const double cx = ucoord(rng), cy = ucoord(rng);
    if (water[static_cast<std::size_t>(cy) * S + static_cast<std::size_t>(cx)]) continue;
    cities.push_back({cx, cy, uradius(rng)});
  }
  std::vector<double> city(N, 0.0);
  for (std::size_t y = 0; y < S; ++y)
    for (std::size_t x = 0; x < S; ++x) {
      double best = 0.0;
      for (const auto& c : cities) {
        const double dx = static_cast<double>(x) - c.x, dy = static_cast<double>(y) - c.y;
        best = std::max(best, std::exp(-(dx * dx + dy * dy) / (2.0 * c.r * c.r)));
      }
      city[y * S + x] = best;
    }

  // Roads: each city links to its two nearest neighbours, plus spurs.
  std::vector<bool> road(N, false);
  w.road_angle.assign(N, 0.0f);
  auto draw = [&](double x0, double y0, double x1, double y1) {
    const double len = std::hypot(x1 - x0, y1 - y0);
    const double angle = std::atan2(y1 - y0, x1 - x0);
    const int steps = static_cast<int>(std::ceil(len * 2.0)) + 1;
    for (int s = 0; s <= steps; ++s) {
      const double t = static_cast<double>(s) / steps;
      const long px = std::lround(x0 + t * (x1 - x0));
      const long py = std::lround(y0 + t * (y1 - y0));
      if (px < 0 || py < 0 || px >= static_cast<long>(S) || py >= static_cast<long>(S)) continue;
      const std::size_t i = static_cast<std::size_t>(py) * S + static_cast<std::size_t>(px);
      if (water[i]) continue;
      road[i] = true;
      w.road_angle[i] = static_cast<float>(angle);
    }
  };
  for (std::size_t a = 0; a < cities.size(); ++a) {
    std::vector<std::pair<double, std::size_t>> near;
    for (std::size_t b = 0; b < cities.size(); ++b)
      if (a != b) near.emplace_back(std::hypot(cities[a].x - cities[b].x, cities[a].y - cities[b].y), b);
    std::sort(near.begin(), near.end());
    for (std::size_t k = 0; k < std::min<std::size_t>(2, near.size()); ++k) {
      const auto& b = cities[near[k].second];
      // one bend per link
      std::uniform_real_distribution<double> jitter(-0.15, 0.15);
      const double mx = (cities[a].x + b.x) / 2 + jitter(rng) * (b.y - cities[a].y);
      const double my = (cities[a].y + b.y) / 2 + jitter(rng) * (cities[a].x - b.x);
      draw(cities[a].x, cities[a].y, mx, my);
      draw(mx, my, b.x, b.y);
    }
    std::uniform_real_distribution<double> uangle(0.0, 2.0 * std::acos(-1.0));
    std::uniform_real_distribution<double> ulen(15.0, 45.0);
    const double ang = uangle(rng), len = ulen(rng);
    draw(cities[a].x, cities[a].y, cities[a].x + len * std::cos(ang),
         cities[a].y + len * std::sin(ang));
  }
  w.road_distance = detail_world::distance_transform(S, road);

  // Development field.
  std::vector<double> dev(N);
  for (std::size_t i = 0; i < N; ++i) {
    if (water[i]) {
      dev[i] = 0.0;
      continue;
    }
    const double road_term = std::exp(-w.road_distance[i] / 2.5);
    const double rural = std::pow(settle[i], 2.0);
    dev[i] = std::clamp(0.95 * city[i] + 0.25 * road_term + 0.5 * rural, 0.0, 1.0);
  }

  w.terrain.resize(N);
  std::vector<bool> urban(N);
  for (std::size_t i = 0; i < N; ++i) {
    Terrain t;
    if (water[i]) t = Terrain::water;
    else if (city[i] > 0.45) t = Terrain::urban;
    else if (road[i]) t = Terrain::road;
    else if (settle[i] > 0.55) t = Terrain::farmland;
    else if (moisture[i] > 0.5) t = Terrain::forest;
    else t = Terrain::barren;
    w.terrain[i] = t;
    urban[i] = t == Terrain::urban;
  }
  w.market_distance = detail_world::distance_transform(S, urban);

  // Lights: zero below the development quantile, rising above it.
  const double tau = detail_world::quantile(dev, opt.zero_light_quantile);
  std::normal_distribution<double> light_noise(0.0, 1.5);
  w.intensity.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    if (water[i] || dev[i] <= tau) {
      w.intensity[i] = 0;
      continue;
    }
    const double u = (dev[i] - tau) / std::max(1e-9, 1.0 - tau);
    const double v = 1.0 + 62.0 * std::pow(u, 1.4) + light_noise(rng);
    w.intensity[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 1L, 63L));
  }
  if (opt.label_noise) {
    std::bernoulli_distribution flip(0.05);
    std::uniform_int_distribution<int> any(0, 63);
    for (auto& v : w.intensity)
      if (flip(rng)) v = static_cast<std::uint8_t>(any(rng));
  }

  // Poverty latent: low where the neighbourhood is developed; a hidden
  // component is invisible in imagery.
  w.development.resize(N);
  w.poverty.resize(N);
  const long n = static_cast<long>(S);
  for (long y = 0; y < n; ++y)
    for (long x = 0; x < n; ++x) {
      double sum = 0.0;
      int cnt = 0;
      for (long dy = -2; dy <= 2; ++dy)
        for (long dx = -2; dx <= 2; ++dx) {
          const long xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= n || yy >= n) continue;
          sum += dev[static_cast<std::size_t>(yy * n + xx)];
          ++cnt;
        }
      const std::size_t i = static_cast<std::size_t>(y * n + x);
      const double local = sum / cnt;
      w.development[i] = static_cast<float>(dev[i]);
      w.poverty[i] = static_cast<float>(
          std::clamp(0.95 - 1.5 * local + 0.3 * (hidden[i] - 0.5), 0.0, 1.0));
    }

  w.temperature.resize(N);
  w.precipitation.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    w.temperature[i] = static_cast<float>(16.0 + 10.0 * (1.0 - elevation[i]));
    w.precipitation[i] = static_cast<float>(700.0 + 800.0 * moisture[i]);
  }

  // Survey sites favour settled rural land.
  const std::size_t n_sites = std::max<std::size_t>(4, N / 1200);
  std::uniform_int_distribution<int> ucell(0, static_cast<int>(S) - 1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t tries = 0; w.survey_sites.size() < n_sites && tries < 100000; ++tries) {
    const int x = ucell(rng), y = ucell(rng);
    const std::size_t i = w.index(x, y);
    if (water[i]) continue;
    if (u01(rng) > 0.25 + 0.75 * settle[i]) continue;
    w.survey_sites.push_back({x, y});
  }
  return w;
}

inline double zero_intensity_fraction(const World& w) {
  std::size_t zeros = 0;
  for (auto v : w.intensity) zeros += v == 0;
  return static_cast<double>(zeros) / static_cast<double>(w.intensity.size());
}

// ---------------------------------------------------------------------------
// Tile rendering

namespace detail_world {

struct Painter {
  Image& img;
  std::uint64_t seed;

  void rect(long y0, long x0, long h, long wd, Rgb c) {
    for (long y = std::max(0L, y0); y < std::min<long>(img.height(), y0 + h); ++y)
      for (long x = std::max(0L, x0); x < std::min<long>(img.width(), x0 + wd); ++x)
        img.set(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c);
  }

  // Thick line through the tile centre at `angle`, with lighter shoulders.
  void road(double angle, double width) {
    const double cx = img.width() / 2.0, cy = img.height() / 2.0;
    const double nx = -std::sin(angle), ny = std::cos(angle);
    for (std::size_t y = 0; y < img.height(); ++y)
      for (std::size_t x = 0; x < img.width(); ++x) {
        const double d = std::abs((x + 0.5 - cx) * nx + (y + 0.5 - cy) * ny);
        if (d < width / 2) {
          const int g = 55 + static_cast<int>(10 * noise::lattice(seed, static_cast<long>(x), static_cast<long>(y)));
          img.set(y, x, Rgb{static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(g),
                            static_cast<std::uint8_t>(g + 5)});
        } else if (d < width / 2 + 1.5) {
          img.set(y, x, Rgb{215, 210, 195});
        }
      }
  }
};

inline std::uint8_t clamp8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

inline Rgb shade(Rgb base, double f, double jitter = 0.0) {
  return Rgb{clamp8(base.r * f + jitter), clamp8(base.g * f + jitter), clamp8(base.b * f + jitter)};
}

}  // namespace detail_world

/// Deterministic procedural daytime tile for one cell.
inline Image render_tile(const World& w, int x, int y, std::size_t tile_px) {
  require(w.in_bounds(x, y), ErrorKind::out_of_bounds,
          "tile (" + std::to_string(x) + ", " + std::to_string(y) + ") outside world of side " +
              std::to_string(w.side));
  require(tile_px >= 8, ErrorKind::invalid_argument, "tile size must be at least 8 pixels");
  const std::size_t i = w.index(x, y);
  const Terrain t = w.terrain[i];
  const double dev = w.development[i];
  const std::uint64_t cell_seed = derive_seed(w.seed, static_cast<std::uint64_t>(i), 0x711E);
  std::mt19937_64 rng(cell_seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const long P = static_cast<long>(tile_px);
  const double px_scale = static_cast<double>(tile_px) / 96.0;

  Image img(tile_px, tile_px);
  detail_world::Painter paint{img, cell_seed};
  using detail_world::shade;

  // Ground texture by underlying land cover.
  auto ground = [&](Terrain cover) {
    const double ox = u01(rng) * 1000, oy = u01(rng) * 1000;
    for (long yy = 0; yy < P; ++yy)
      for (long xx = 0; xx < P; ++xx) {
        const double fx = ox + xx / px_scale, fy = oy + yy / px_scale;
        Rgb c;
        switch (cover) {
          case Terrain::water: {
            const double n = noise::fbm(cell_seed, fx, fy, 12.0, 2);
            c = shade(Rgb{35, 80, 160}, 0.85 + 0.3 * n);
            break;
          }
          case Terrain::forest: {
            const double n = noise::fbm(cell_seed, fx, fy, 5.0, 3);
            c = shade(Rgb{40, 95, 40}, 0.55 + 0.8 * n);
            break;
          }
          case Terrain::urban: {
            const double n = noise::fbm(cell_seed, fx, fy, 8.0, 2);
            c = shade(Rgb{125, 122, 118}, 0.85 + 0.3 * n);
            break;
          }
          default: {
            const double n = noise::fbm(cell_seed, fx, fy, 16.0, 2);
            c = shade(Rgb{178, 152, 112}, 0.85 + 0.25 * n);
            break;
          }
        }
        img.set(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx), c);
      }
  };

  // Field plots with row stripes (grid-like agricultural pattern).
  auto fields = [&]() {
    const long plots = 2 + static_cast<long>(u01(rng) * 3);
    const long step = P / plots;
    for (long py = 0; py < plots; ++py)
      for (long pxi = 0; pxi < plots; ++pxi) {
        const bool green = u01(rng) < 0.55;
        const Rgb base = green ? Rgb{95, 150, 60} : Rgb{190, 170, 90};
        const bool vertical = u01(rng) < 0.5;
        for (long yy = py * step; yy < std::min(P, (py + 1) * step); ++yy)
          for (long xx = pxi * step; xx < std::min(P, (pxi + 1) * step); ++xx) {
            const long along = vertical ? xx : yy;
            const double f = (along / std::max(1L, static_cast<long>(3 * px_scale))) % 2 ? 0.85 : 1.0;
            const bool border = yy == py * step || xx == pxi * step;
            img.set(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx),
                    border ? Rgb{120, 105, 70} : shade(base, f));
          }
      }
  };

  // Roofs: metal (bright) or thatch (brown) squares.
  auto houses = [&](double expected, double metal_share) {
    std::poisson_distribution<int> count(std::max(0.0, expected));
    const int n = count(rng);
    const long s_min = std::max(2L, std::lround(3 * px_scale));
    for (int k = 0; k < n; ++k) {
      const long s = s_min + static_cast<long>(u01(rng) * 3 * px_scale);
      const long yy = static_cast<long>(u01(rng) * (P - s));
      const long xx = static_cast<long>(u01(rng) * (P - s));
      const bool metal = u01(rng) < metal_share;
      paint.rect(yy, xx, s, s, metal ? Rgb{215, 218, 225} : Rgb{135, 100, 60});
      paint.rect(yy + s, xx + 1, 1, s, Rgb{50, 45, 40});  // shadow
    }
  };

  switch (t) {
    case Terrain::water:
      ground(Terrain::water);
      break;
    case Terrain::forest:
      ground(Terrain::forest);
      houses(12.0 * dev, 0.2 + 0.6 * dev);
      break;
    case Terrain::barren:
      ground(Terrain::barren);
      houses(14.0 * dev, 0.2 + 0.6 * dev);
      break;
    case Terrain::farmland:
      fields();
      houses(18.0 * dev, 0.2 + 0.6 * dev);
      break;
    case Terrain::road: {
      if (dev > 0.35) fields();
      else ground(Terrain::barren);
      houses(16.0 * dev, 0.3 + 0.6 * dev);
      paint.road(w.road_angle[i] + (u01(rng) - 0.5) * 0.2, 9.0 * px_scale);
      break;
    }
    case Terrain::urban: {
      ground(Terrain::urban);
      // street grid
      const long block = std::max(8L, std::lround(24 * px_scale));
      const long off = static_cast<long>(u01(rng) * block);
      for (long yy = 0; yy < P; ++yy)
        for (long xx = 0; xx < P; ++xx)
          if ((yy + off) % block < 2 || (xx + off) % block < 2)
            img.set(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx), Rgb{70, 70, 72});
      // dense buildings
      const long nb = static_cast<long>(20 + 30 * dev);
      for (long k = 0; k < nb; ++k) {
        const long s = std::max(3L, std::lround((4 + u01(rng) * 8) * px_scale));
        const long yy = static_cast<long>(u01(rng) * (P - s));
        const long xx = static_cast<long>(u01(rng) * (P - s));
        const double r = u01(rng);
        const Rgb roof = r < 0.5 ? Rgb{225, 225, 228} : (r < 0.8 ? Rgb{170, 80, 60} : Rgb{95, 95, 100});
        paint.rect(yy, xx, s, s, roof);
      }
      break;
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Snapshot: <dir>/world.manifest (text) + <dir>/world.bin (class byte,
// intensity byte per cell, row-major).

inline void save_world(const World& w, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream m(dir / "world.manifest");
    require(static_cast<bool>(m), ErrorKind::io, "cannot write " + (dir / "world.manifest").string());
    m << std::setprecision(17);
    m << "povmap-world\nversion 1\nside " << w.side << "\nseed " << w.seed
      << "\nzero_light_quantile " << w.options.zero_light_quantile << "\nlabel_noise "
      << (w.options.label_noise ? 1 : 0) << "\nlayout class,intensity u8 row-major\nraster world.bin\n";
  }
  std::ofstream b(dir / "world.bin", std::ios::binary);
  require(static_cast<bool>(b), ErrorKind::io, "cannot write " + (dir / "world.bin").string());
  for (std::size_t i = 0; i < w.terrain.size(); ++i) {
    const char cell[2] = {static_cast<char>(w.terrain[i]), static_cast<char>(w.intensity[i])};
    b.write(cell, 2);
  }
}

/// Regenerates the world from the manifest and checks it against the raster.
inline World load_world(const std::filesystem::path& dir) {
  std::ifstream m(dir / "world.manifest");
  require(static_cast<bool>(m), ErrorKind::missing_input,
          "missing world manifest: " + (dir / "world.manifest").string());
  std::string magic, key;
  int version = 0;
  WorldOptions opt;
  m >> magic >> key >> version;
  require(magic == "povmap-world" && key == "version", ErrorKind::malformed_input,
          "not a world manifest");
  require(version == 1, ErrorKind::version_mismatch, "unsupported world manifest version");
  m >> key >> opt.side;
  require(key == "side", ErrorKind::malformed_input, "world manifest: expected side");
  m >> key >> opt.seed;
  require(key == "seed" && !m.fail(), ErrorKind::malformed_input, "world manifest: expected seed");
  m >> key >> opt.zero_light_quantile;
  require(key == "zero_light_quantile" && !m.fail(), ErrorKind::malformed_input,
          "world manifest: expected zero_light_quantile");
  int noisy = 0;
  m >> key >> noisy;
  require(key == "label_noise" && !m.fail(), ErrorKind::malformed_input,
          "world manifest: expected label_noise");
  opt.label_noise = noisy != 0;
  World w = generate_world(opt);
  std::ifstream b(dir / "world.bin", std::ios::binary);
  require(static_cast<bool>(b), ErrorKind::missing_input,
          "missing world raster: " + (dir / "world.bin").string());
  std::vector<char> raw(w.terrain.size() * 2);
  b.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  require(static_cast<std::size_t>(b.gcount()) == raw.size(), ErrorKind::malformed_input,
          "world raster truncated");
  for (std::size_t i = 0; i < w.terrain.size(); ++i)
    require(static_cast<std::uint8_t>(raw[2 * i]) == static_cast<std::uint8_t>(w.terrain[i]) &&
                static_cast<std::uint8_t>(raw[2 * i + 1]) == w.intensity[i],
            ErrorKind::malformed_input, "world raster does not match its manifest seed");
  return w;
}

}  // namespace povmap
