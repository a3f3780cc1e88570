#pragma once

#include <zlib.h>

#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trajrecon/evaluation.hpp"

namespace trajrecon {

/// Per-point classification for evaluation-colored plots.
enum class PointClass : std::uint8_t { plain, tp, fp, fn };

namespace detail {

struct Canvas {
  int w = 0, h = 0;
  std::vector<std::uint8_t> rgb;

  Canvas(int width, int height) : w(width), h(height), rgb(3 * width * height, 255) {}

  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    const std::size_t k = 3 * (static_cast<std::size_t>(y) * w + x);
    rgb[k] = r;
    rgb[k + 1] = g;
    rgb[k + 2] = b;
  }
};

inline void png_chunk(std::ofstream& out, const char type[4], const std::uint8_t* data,
                      std::uint32_t len) {
  const auto be32 = [](std::uint32_t v) {
    return std::array<std::uint8_t, 4>{static_cast<std::uint8_t>(v >> 24),
                                       static_cast<std::uint8_t>(v >> 16),
                                       static_cast<std::uint8_t>(v >> 8),
                                       static_cast<std::uint8_t>(v)};
  };
  auto l = be32(len);
  out.write(reinterpret_cast<const char*>(l.data()), 4);
  out.write(type, 4);
  if (len) out.write(reinterpret_cast<const char*>(data), len);
  std::uint32_t crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  if (len) crc = crc32(crc, data, len);
  auto c = be32(crc);
  out.write(reinterpret_cast<const char*>(c.data()), 4);
}

inline void write_png(const Canvas& canvas, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  out.write(reinterpret_cast<const char*>(sig), 8);

  std::uint8_t ihdr[13];
  const auto put32 = [&](std::uint8_t* p, std::uint32_t v) {
    p[0] = v >> 24;
    p[1] = v >> 16;
    p[2] = v >> 8;
    p[3] = v;
  };
  put32(ihdr, canvas.w);
  put32(ihdr + 4, canvas.h);
  ihdr[8] = 8;   // bit depth
  ihdr[9] = 2;   // truecolor
  ihdr[10] = ihdr[11] = ihdr[12] = 0;
  png_chunk(out, "IHDR", ihdr, 13);

  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(canvas.h) * (canvas.w * 3 + 1));
  for (int y = 0; y < canvas.h; ++y) {
    raw.push_back(0);  // filter: none
    const std::uint8_t* row = canvas.rgb.data() + 3 * static_cast<std::size_t>(y) * canvas.w;
    raw.insert(raw.end(), row, row + 3 * canvas.w);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw std::runtime_error("png deflate failed");
  png_chunk(out, "IDAT", compressed.data(), static_cast<std::uint32_t>(bound));
  png_chunk(out, "IEND", nullptr, 0);
}

}  // namespace detail

struct PlotOptions {
  double lane_width = 12.0;
  std::optional<int> lane;      // 1-based; unset plots every lane
  int width = 1400;
  int lane_height = 220;
  bool as_csv = false;          // point dump instead of an image
};

/// Map from (track id, frame) to a classification, built from frame matches.
struct PlotClasses {
  std::map<std::pair<std::string, std::int64_t>, PointClass> by_point;

  static PlotClasses from_matches(const std::vector<FrameMatch>& matches, const EvalDataset& gt,
                                  const EvalDataset& pred) {
    PlotClasses c;
    for (const auto& fm : matches) {
      for (const auto& m : fm.matches)
        c.by_point[{pred.tracks[m.pred].id, fm.frame}] = PointClass::tp;
      for (int j : fm.unmatched_pred) c.by_point[{pred.tracks[j].id, fm.frame}] = PointClass::fp;
      for (int i : fm.unmatched_gt) c.by_point[{gt.tracks[i].id, fm.frame}] = PointClass::fn;
    }
    return c;
  }
};

/// Writes a per-lane time-space diagram. CSV mode dumps one row per point
/// (t, x, y, lane, track, class); image mode rasterizes lanes stacked
/// top/down, colored by class when given, by track hash otherwise.
inline void emit_timespace_plot(const EvalDataset& data, const std::string& path,
                                const PlotOptions& opt = {},
                                const PlotClasses* classes = nullptr) {
  const auto lane_of = [&](double y) {
    return static_cast<int>(std::floor(y / opt.lane_width)) + 1;
  };
  const auto class_of = [&](const EvalTrack& t, std::int64_t frame) {
    if (!classes) return PointClass::plain;
    const auto it = classes->by_point.find({t.id, frame});
    return it == classes->by_point.end() ? PointClass::plain : it->second;
  };

  if (opt.as_csv) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "t,x,y,lane,track,class\n";
    static const char* names[] = {"", "tp", "fp", "fn"};
    for (const auto& t : data.tracks) {
      for (std::size_t k = 0; k < t.present.size(); ++k) {
        if (!t.present[k]) continue;
        const std::int64_t frame = t.first_frame + static_cast<std::int64_t>(k);
        const int lane = lane_of(t.y[k]);
        if (opt.lane && *opt.lane != lane) continue;
        out << static_cast<double>(frame) * data.dt << ',' << t.x[k] << ',' << t.y[k] << ','
            << lane << ',' << t.id << ',' << names[static_cast<int>(class_of(t, frame))] << '\n';
      }
    }
    return;
  }

  // bounds
  double x_lo = 0.0, x_hi = 1.0;
  std::int64_t f_lo = 0, f_hi = 1;
  int lane_lo = 1, lane_hi = 1;
  bool any = false;
  for (const auto& t : data.tracks) {
    for (std::size_t k = 0; k < t.present.size(); ++k) {
      if (!t.present[k]) continue;
      const std::int64_t frame = t.first_frame + static_cast<std::int64_t>(k);
      const int lane = lane_of(t.y[k]);
      if (opt.lane && *opt.lane != lane) continue;
      if (!any) {
        x_lo = x_hi = t.x[k];
        f_lo = f_hi = frame;
        lane_lo = lane_hi = lane;
        any = true;
      } else {
        x_lo = std::min(x_lo, t.x[k]);
        x_hi = std::max(x_hi, t.x[k]);
        f_lo = std::min(f_lo, frame);
        f_hi = std::max(f_hi, frame);
        lane_lo = std::min(lane_lo, lane);
        lane_hi = std::max(lane_hi, lane);
      }
    }
  }
  const int lanes = any ? (lane_hi - lane_lo + 1) : 1;
  detail::Canvas canvas(opt.width, std::max(1, lanes * opt.lane_height));
  if (any) {
    const double fx = static_cast<double>(opt.width - 1) /
                      std::max<double>(1, static_cast<double>(f_hi - f_lo));
    const double fy = static_cast<double>(opt.lane_height - 1) / std::max(1.0, x_hi - x_lo);
    for (const auto& t : data.tracks) {
      const std::size_t hash = std::hash<std::string>{}(t.id);
      const std::uint8_t hr = 40 + hash % 160, hg = 40 + (hash / 7) % 160,
                         hb = 40 + (hash / 131) % 160;
      for (std::size_t k = 0; k < t.present.size(); ++k) {
        if (!t.present[k]) continue;
        const std::int64_t frame = t.first_frame + static_cast<std::int64_t>(k);
        const int lane = lane_of(t.y[k]);
        if (opt.lane && *opt.lane != lane) continue;
        const int px = static_cast<int>(static_cast<double>(frame - f_lo) * fx);
        const int band = (lane - lane_lo) * opt.lane_height;
        const int py = band + (opt.lane_height - 1 - static_cast<int>((t.x[k] - x_lo) * fy));
        switch (class_of(t, frame)) {
          case PointClass::tp:
            canvas.set(px, py, 30, 80, 220);
            break;
          case PointClass::fp:
            canvas.set(px, py, 220, 40, 40);
            break;
          case PointClass::fn:
            canvas.set(px, py, 235, 180, 20);
            break;
          default:
            canvas.set(px, py, hr, hg, hb);
        }
      }
    }
  }
  detail::write_png(canvas, path);
}

}  // namespace trajrecon
