#include "dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "error.hpp"
#include "rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

namespace fs = std::filesystem;

namespace uhdn {

const std::set<std::string>& image_extensions() {
  static const std::set<std::string> exts{".png", ".jpg", ".jpeg", ".pgm",
                                          ".bmp"};
  return exts;
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
const char kMagic[4] = {'U', 'H', 'D', 'N'};

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  return e;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  write_u32(out, std::uint32_t(v & 0xffffffffULL));
  write_u32(out, std::uint32_t(v >> 32));
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    fail(ErrorCode::mismatch, "truncated checkpoint: " + path);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

std::uint64_t read_u64(std::istream& in, const std::string& path) {
  std::uint64_t lo = read_u32(in, path);
  std::uint64_t hi = read_u32(in, path);
  return lo | (hi << 32);
}

int default_channels(Layout layout) {
  return layout == Layout::aiglern ? 1 : 3;
}

std::int64_t round_up(std::int64_t v, std::int64_t m) {
  return (v + m - 1) / m * m;
}

}  // namespace

Layout parse_layout(const std::string& name) {
  if (name == "cfd") return Layout::cfd;
  if (name == "aiglern") return Layout::aiglern;
  if (name == "generic") return Layout::generic;
  fail(ErrorCode::usage,
       "unknown layout '" + name + "' (expected cfd, aiglern, or generic)");
}

std::string layout_name(Layout layout) {
  switch (layout) {
    case Layout::cfd: return "cfd";
    case Layout::aiglern: return "aiglern";
    case Layout::generic: return "generic";
  }
  fail(ErrorCode::internal, "unreachable layout value");
}

PaddedTensor pad_to_multiple(const Tensor4& t, int m) {
  if (m < 1)
    fail(ErrorCode::usage,
         "padding multiple must be positive, got " + std::to_string(m));
  const Shape4 s = t.shape();
  const std::int64_t nh = round_up(s.h, m), nw = round_up(s.w, m);
  PaddedTensor out;
  out.pad.right = int(nw - s.w);
  out.pad.bottom = int(nh - s.h);
  if (nh == s.h && nw == s.w) {
    out.tensor = t;
    return out;
  }
  out.tensor = Tensor4(Shape4{s.n, s.c, nh, nw});
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c)
      for (std::int64_t y = 0; y < s.h; ++y)
        std::memcpy(&out.tensor(n, c, y, 0), &t(n, c, y, 0),
                    std::size_t(s.w) * sizeof(float));
  return out;
}

Tensor4 crop_pad(const Tensor4& t, Pad pad) {
  const Shape4 s = t.shape();
  if (pad.right < 0 || pad.bottom < 0 || pad.right >= s.w || pad.bottom >= s.h)
    fail(ErrorCode::usage, "pad (" + std::to_string(pad.right) + ", " +
                               std::to_string(pad.bottom) +
                               ") cannot be cropped from " + s.str());
  if (pad.right == 0 && pad.bottom == 0) return t;
  Tensor4 out(Shape4{s.n, s.c, s.h - pad.bottom, s.w - pad.right});
  const Shape4 os = out.shape();
  for (std::int64_t n = 0; n < os.n; ++n)
    for (std::int64_t c = 0; c < os.c; ++c)
      for (std::int64_t y = 0; y < os.h; ++y)
        std::memcpy(&out(n, c, y, 0), &t(n, c, y, 0),
                    std::size_t(os.w) * sizeof(float));
  return out;
}

Tensor4 load_image(const std::string& path, int channels) {
  if (channels != 1 && channels != 3)
    fail(ErrorCode::usage,
         "image channels must be 1 or 3, got " + std::to_string(channels));
  cv::Mat m = cv::imread(
      path, channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
  if (m.empty()) fail(ErrorCode::usage, "cannot decode image: " + path);
  Tensor4 out(Shape4{1, channels, m.rows, m.cols});
  if (channels == 1) {
    for (int y = 0; y < m.rows; ++y)
      for (int x = 0; x < m.cols; ++x)
        out(0, 0, y, x) = float(m.at<unsigned char>(y, x)) / 255.0f;
  } else {
    // OpenCV decodes interleaved BGR; store planar RGB
    for (int y = 0; y < m.rows; ++y)
      for (int x = 0; x < m.cols; ++x) {
        const cv::Vec3b px = m.at<cv::Vec3b>(y, x);
        for (int c = 0; c < 3; ++c)
          out(0, c, y, x) = float(px[2 - c]) / 255.0f;
      }
  }
  return out;
}

Tensor4 load_mask(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) fail(ErrorCode::usage, "cannot decode mask: " + path);
  Tensor4 out(Shape4{1, 1, m.rows, m.cols});
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x)
      out(0, 0, y, x) = m.at<unsigned char>(y, x) > 127 ? 1.0f : 0.0f;
  return out;
}

std::vector<Sample> load_dataset(const std::string& root, Layout layout,
                                 int channels) {
  if (channels == 0) channels = default_channels(layout);
  const fs::path imgdir = fs::path(root) / "image";
  const fs::path gtdir = fs::path(root) / "groundtruth";
  if (!fs::is_directory(imgdir))
    fail(ErrorCode::usage, "missing image directory: " + imgdir.string());
  if (!fs::is_directory(gtdir))
    fail(ErrorCode::usage, "missing groundtruth directory: " + gtdir.string());

  std::vector<Sample> samples;
  for (const fs::directory_entry& e : fs::directory_iterator(imgdir)) {
    if (!e.is_regular_file() || !image_extensions().count(lower_ext(e.path())))
      continue;
    const std::string id = e.path().stem().string();
    fs::path gt = gtdir / e.path().filename();
    if (!fs::exists(gt)) {
      gt.clear();
      for (const std::string& ext : image_extensions()) {
        fs::path cand = gtdir / (id + ext);
        if (fs::exists(cand)) {
          gt = cand;
          break;
        }
      }
      if (gt.empty())
        fail(ErrorCode::usage, "no ground truth for image stem '" + id + "'");
    }
    Tensor4 image = load_image(e.path().string(), channels);
    Tensor4 mask = load_mask(gt.string());
    if (image.shape().h != mask.shape().h || image.shape().w != mask.shape().w)
      fail(ErrorCode::mismatch,
           "image and mask dimensions differ for '" + id + "': " +
               image.shape().str() + " vs " + mask.shape().str());
    Sample s;
    s.id = id;
    PaddedTensor pi = pad_to_multiple(image, 8);
    PaddedTensor pm = pad_to_multiple(mask, 8);
    s.image = std::move(pi.tensor);
    s.mask = std::move(pm.tensor);
    s.pad = pi.pad;
    samples.push_back(std::move(s));
  }
  if (samples.empty())
    std::fprintf(stderr, "warning: no images found under %s\n",
                 imgdir.string().c_str());
  std::sort(samples.begin(), samples.end(),
            [](const Sample& a, const Sample& b) { return a.id < b.id; });
  return samples;
}

DatasetSplit split(const std::vector<Sample>& samples, Layout layout,
                   std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const Sample& s : samples) ids.push_back(s.id);
  Rng rng(seed);
  rng.shuffle(ids);

  const std::int64_t n = std::int64_t(ids.size());
  std::int64_t k = 0;
  switch (layout) {
    case Layout::cfd:
      k = n == 118 ? 72 : std::llround(double(n) * 72.0 / 118.0);
      break;
    case Layout::aiglern:
      k = n == 38 ? 24 : std::llround(double(n) * 24.0 / 38.0);
      break;
    case Layout::generic:
      k = std::llround(double(n) * 0.62);
      break;
  }
  k = std::clamp<std::int64_t>(k, 0, n);

  DatasetSplit out;
  out.seed = seed;
  out.train.assign(ids.begin(), ids.begin() + k);
  out.test.assign(ids.begin() + k, ids.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

void save_checkpoint(const Network& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::usage, "cannot open for writing: " + path);
  out.write(kMagic, 4);
  write_u32(out, kCheckpointVersion);

  const NetworkConfig& cfg = net.config();
  write_u32(out, std::uint32_t(cfg.in_channels));
  write_u32(out, std::uint32_t(cfg.base_channels));
  write_u32(out, std::uint32_t(cfg.dilation_rates.size()));
  for (int r : cfg.dilation_rates) write_u32(out, std::uint32_t(r));
  out.put(cfg.with_mdm ? 1 : 0);
  out.put(cfg.with_hf ? 1 : 0);
  write_u64(out, cfg.seed);

  const std::vector<ParamSpec> specs = Network::expected_parameters(cfg);
  write_u32(out, std::uint32_t(specs.size()));
  for (const ParamSpec& spec : specs) {
    const Tensor4& t = net.param(spec.name);
    write_u32(out, std::uint32_t(spec.name.size()));
    out.write(spec.name.data(), std::streamsize(spec.name.size()));
    if (spec.is_bias) {
      write_u32(out, 1);
      write_u32(out, std::uint32_t(t.shape().c));
    } else {
      write_u32(out, 4);
      write_u32(out, std::uint32_t(t.shape().n));
      write_u32(out, std::uint32_t(t.shape().c));
      write_u32(out, std::uint32_t(t.shape().h));
      write_u32(out, std::uint32_t(t.shape().w));
    }
    out.write(reinterpret_cast<const char*>(&t[0]),
              std::streamsize(t.count()) * 4);
  }
  if (!out) fail(ErrorCode::usage, "write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::usage, "cannot open checkpoint: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    fail(ErrorCode::mismatch, "not a UHDN checkpoint: " + path);
  const std::uint32_t version = read_u32(in, path);
  if (version != kCheckpointVersion)
    fail(ErrorCode::mismatch, "unsupported checkpoint version " +
                                  std::to_string(version) + ": " + path);

  Checkpoint ck;
  ck.config.in_channels = int(read_u32(in, path));
  ck.config.base_channels = int(read_u32(in, path));
  const std::uint32_t rates = read_u32(in, path);
  ck.config.dilation_rates.clear();
  for (std::uint32_t i = 0; i < rates; ++i)
    ck.config.dilation_rates.push_back(int(read_u32(in, path)));
  int mdm = in.get(), hf = in.get();
  if (mdm < 0 || hf < 0)
    fail(ErrorCode::mismatch, "truncated checkpoint: " + path);
  ck.config.with_mdm = mdm != 0;
  ck.config.with_hf = hf != 0;
  ck.config.seed = read_u64(in, path);
  ck.config.validate();

  const std::uint32_t count = read_u32(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len))
      fail(ErrorCode::mismatch, "truncated checkpoint: " + path);
    const std::uint32_t rank = read_u32(in, path);
    Shape4 shape{1, 1, 1, 1};
    if (rank == 1) {
      shape.c = std::int64_t(read_u32(in, path));
    } else if (rank == 4) {
      shape.n = std::int64_t(read_u32(in, path));
      shape.c = std::int64_t(read_u32(in, path));
      shape.h = std::int64_t(read_u32(in, path));
      shape.w = std::int64_t(read_u32(in, path));
    } else {
      fail(ErrorCode::mismatch, "unsupported tensor rank " +
                                    std::to_string(rank) + " for '" + name +
                                    "': " + path);
    }
    Tensor4 t(shape);
    if (!in.read(reinterpret_cast<char*>(&t[0]),
                 std::streamsize(t.count()) * 4))
      fail(ErrorCode::mismatch, "truncated checkpoint: " + path);
    ck.entries.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

void install_parameters(Network& net, const Checkpoint& ck) {
  std::map<std::string, const Tensor4*> got;
  for (const auto& [name, t] : ck.entries) got[name] = &t;

  std::string missing, unexpected;
  for (const std::string& name : net.param_names())
    if (!got.count(name)) missing += missing.empty() ? name : ", " + name;
  {
    std::set<std::string> expected(net.param_names().begin(),
                                   net.param_names().end());
    for (const auto& [name, t] : ck.entries)
      if (!expected.count(name))
        unexpected += unexpected.empty() ? name : ", " + name;
  }
  if (!missing.empty() || !unexpected.empty()) {
    std::string msg = "checkpoint parameter set mismatch";
    if (!missing.empty()) msg += "; missing: " + missing;
    if (!unexpected.empty()) msg += "; unexpected: " + unexpected;
    fail(ErrorCode::mismatch, msg);
  }
  for (const std::string& name : net.param_names()) {
    Tensor4& dst = net.param(name);
    const Tensor4& src = *got.at(name);
    if (!(src.shape() == dst.shape()))
      fail(ErrorCode::mismatch, "checkpoint tensor '" + name + "' has shape " +
                                    src.shape().str() + ", expected " +
                                    dst.shape().str());
    dst = src;
  }
}

Network load_network(const std::string& path) {
  Checkpoint ck = read_checkpoint(path);
  Network net(ck.config);
  install_parameters(net, ck);
  return net;
}

void save_probmap(const Tensor4& map, Pad pad, const std::string& path) {
  const Shape4 s = map.shape();
  if (s.n != 1 || s.c != 1)
    fail(ErrorCode::usage,
         "probability map must be (1,1,h,w), got " + s.str());
  for (std::int64_t i = 0; i < map.count(); ++i)
    if (!(map[i] >= 0.0f && map[i] <= 1.0f))
      fail(ErrorCode::usage,
           "probability out of [0,1]: " + std::to_string(map[i]));
  const Tensor4 cropped = crop_pad(map, pad);
  const Shape4 cs = cropped.shape();

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::usage, "cannot open for writing: " + path);
  out << "Pf\n" << cs.w << " " << cs.h << "\n-1.0\n";
  for (std::int64_t y = cs.h - 1; y >= 0; --y)
    out.write(reinterpret_cast<const char*>(&cropped(0, 0, y, 0)),
              std::streamsize(cs.w) * 4);
  if (!out) fail(ErrorCode::usage, "write failed: " + path);
}

Tensor4 load_probmap(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::usage, "cannot open probability map: " + path);
  std::string magic;
  std::int64_t w = 0, h = 0;
  double scale = 0.0;
  if (!(in >> magic >> w >> h >> scale))
    fail(ErrorCode::mismatch, "malformed float map header: " + path);
  if (magic != "Pf")
    fail(ErrorCode::mismatch,
         "expected a grayscale 'Pf' float map: " + path);
  if (w <= 0 || h <= 0)
    fail(ErrorCode::mismatch, "bad float map dimensions: " + path);
  if (scale >= 0.0)
    fail(ErrorCode::mismatch, "big-endian float map unsupported: " + path);
  in.get();  // single whitespace separating header from raster
  Tensor4 out(Shape4{1, 1, h, w});
  for (std::int64_t y = h - 1; y >= 0; --y)
    if (!in.read(reinterpret_cast<char*>(&out(0, 0, y, 0)),
                 std::streamsize(w) * 4))
      fail(ErrorCode::mismatch, "truncated float map: " + path);
  return out;
}

void save_mask_png(const Tensor4& mask, Pad pad, const std::string& path) {
  const Shape4 s = mask.shape();
  if (s.n != 1 || s.c != 1)
    fail(ErrorCode::usage, "mask must be (1,1,h,w), got " + s.str());
  const Tensor4 cropped = crop_pad(mask, pad);
  const Shape4 cs = cropped.shape();
  cv::Mat m(int(cs.h), int(cs.w), CV_8UC1);
  for (std::int64_t y = 0; y < cs.h; ++y)
    for (std::int64_t x = 0; x < cs.w; ++x)
      m.at<unsigned char>(int(y), int(x)) =
          cropped(0, 0, y, x) != 0.0f ? 255 : 0;
  bool ok = false;
  try {
    ok = cv::imwrite(path, m);
  } catch (const cv::Exception& e) {
    fail(ErrorCode::usage, "cannot write " + path + ": " + e.what());
  }
  if (!ok) fail(ErrorCode::usage, "cannot write " + path);
}

}  // namespace uhdn
