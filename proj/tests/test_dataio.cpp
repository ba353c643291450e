#include "dataio.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <unistd.h>

#include "doctest.h"
#include "error.hpp"
#include "rng.hpp"

using namespace uhdn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("uhdn_io_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

Tensor4 random01(Shape4 s, Rng& rng) {
  Tensor4 t(s);
  for (std::int64_t i = 0; i < t.count(); ++i)
    t[i] = float(rng.next_uniform());
  return t;
}

void write_gray_png(const fs::path& p, int h, int w, unsigned char base) {
  cv::Mat m(h, w, CV_8UC1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      m.at<unsigned char>(y, x) = (unsigned char)((base + y * w + x) % 256);
  REQUIRE(cv::imwrite(p.string(), m));
}

void write_color_png(const fs::path& p, int h, int w) {
  cv::Mat m(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      m.at<cv::Vec3b>(y, x) = cv::Vec3b((unsigned char)(x % 256),
                                        (unsigned char)(y % 256),
                                        (unsigned char)((x + y) % 256));
  REQUIRE(cv::imwrite(p.string(), m));
}

void write_mask_png(const fs::path& p, int h, int w, int period = 3) {
  cv::Mat m(h, w, CV_8UC1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      m.at<unsigned char>(y, x) = (y + x) % period == 0 ? 255 : 0;
  REQUIRE(cv::imwrite(p.string(), m));
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode(0);
}

}  // namespace

TEST_CASE("layout names round trip") {
  CHECK(parse_layout("cfd") == Layout::cfd);
  CHECK(parse_layout("aiglern") == Layout::aiglern);
  CHECK(parse_layout("generic") == Layout::generic);
  CHECK(layout_name(Layout::cfd) == "cfd");
  CHECK(layout_name(Layout::aiglern) == "aiglern");
  CHECK(layout_name(Layout::generic) == "generic");
  CHECK(code_of([] { parse_layout("imagenet"); }) == ErrorCode::usage);
}

TEST_CASE("padding to a multiple of eight") {
  SUBCASE("already divisible stays untouched") {
    Tensor4 t(Shape4{1, 3, 320, 480});
    t(0, 1, 100, 200) = 0.7f;
    PaddedTensor p = pad_to_multiple(t, 8);
    CHECK(p.pad.right == 0);
    CHECK(p.pad.bottom == 0);
    CHECK(p.tensor.shape() == t.shape());
    CHECK(p.tensor(0, 1, 100, 200) == 0.7f);
  }
  SUBCASE("wide scanner frame gains one column and two rows") {
    Tensor4 t(Shape4{1, 1, 462, 991});
    for (std::int64_t i = 0; i < t.count(); ++i) t[i] = 0.5f;
    PaddedTensor p = pad_to_multiple(t, 8);
    CHECK(p.tensor.shape().h == 464);
    CHECK(p.tensor.shape().w == 992);
    CHECK(p.pad.right == 1);
    CHECK(p.pad.bottom == 2);
    CHECK(p.tensor(0, 0, 100, 100) == 0.5f);
    CHECK(p.tensor(0, 0, 0, 991) == 0.0f);   // new column
    CHECK(p.tensor(0, 0, 463, 0) == 0.0f);   // new row
  }
  SUBCASE("narrow scanner frame gets the same pad") {
    PaddedTensor p = pad_to_multiple(Tensor4(Shape4{1, 1, 462, 311}), 8);
    CHECK(p.tensor.shape().h == 464);
    CHECK(p.tensor.shape().w == 312);
    CHECK(p.pad.right == 1);
    CHECK(p.pad.bottom == 2);
  }
  SUBCASE("multiple one never pads") {
    PaddedTensor p = pad_to_multiple(Tensor4(Shape4{2, 2, 13, 9}), 1);
    CHECK(p.pad.right == 0);
    CHECK(p.pad.bottom == 0);
  }
  SUBCASE("non-positive multiple is rejected") {
    CHECK(code_of([] { pad_to_multiple(Tensor4(Shape4{1, 1, 4, 4}), 0); }) ==
          ErrorCode::usage);
  }
}

TEST_CASE("pad then crop restores the original tensor") {
  Rng rng(601);
  for (Shape4 s : {Shape4{1, 3, 13, 9}, Shape4{2, 1, 8, 8}, Shape4{1, 1, 1, 1}}) {
    Tensor4 t = random01(s, rng);
    PaddedTensor p = pad_to_multiple(t, 8);
    CHECK(p.tensor.shape().h % 8 == 0);
    CHECK(p.tensor.shape().w % 8 == 0);
    Tensor4 back = crop_pad(p.tensor, p.pad);
    REQUIRE(back.shape() == t.shape());
    for (std::int64_t i = 0; i < t.count(); ++i) REQUIRE(back[i] == t[i]);
  }
  CHECK(code_of([] {
          crop_pad(Tensor4(Shape4{1, 1, 4, 4}), Pad{4, 0});
        }) == ErrorCode::usage);
  CHECK(code_of([] {
          crop_pad(Tensor4(Shape4{1, 1, 4, 4}), Pad{-1, 0});
        }) == ErrorCode::usage);
}

TEST_CASE("image decoding to planar [0,1] tensors") {
  TempDir dir;
  const fs::path color = dir.path / "c.png";
  cv::Mat m(2, 3, CV_8UC3);
  m.setTo(cv::Scalar(0, 0, 0));
  m.at<cv::Vec3b>(0, 0) = cv::Vec3b(10, 20, 30);  // decoded storage is BGR
  REQUIRE(cv::imwrite(color.string(), m));

  Tensor4 rgb = load_image(color.string(), 3);
  REQUIRE(rgb.shape() == (Shape4{1, 3, 2, 3}));
  CHECK(rgb(0, 0, 0, 0) == doctest::Approx(30.0f / 255.0f));  // red plane
  CHECK(rgb(0, 1, 0, 0) == doctest::Approx(20.0f / 255.0f));
  CHECK(rgb(0, 2, 0, 0) == doctest::Approx(10.0f / 255.0f));

  Tensor4 gray = load_image(color.string(), 1);
  REQUIRE(gray.shape() == (Shape4{1, 1, 2, 3}));
  for (std::int64_t i = 0; i < gray.count(); ++i) {
    CHECK(gray[i] >= 0.0f);
    CHECK(gray[i] <= 1.0f);
  }

  const fs::path junk = dir.path / "junk.png";
  std::ofstream(junk) << "this is not an image";
  CHECK(code_of([&] { load_image(junk.string(), 3); }) == ErrorCode::usage);
  CHECK(code_of([&] { load_image(color.string(), 2); }) == ErrorCode::usage);
  CHECK(code_of([&] { load_image((dir.path / "missing.png").string(), 3); }) ==
        ErrorCode::usage);
}

TEST_CASE("mask binarization thresholds strictly above 127") {
  TempDir dir;
  const fs::path p = dir.path / "m.png";
  cv::Mat m(1, 5, CV_8UC1);
  unsigned char levels[5] = {0, 100, 127, 128, 255};
  for (int x = 0; x < 5; ++x) m.at<unsigned char>(0, x) = levels[x];
  REQUIRE(cv::imwrite(p.string(), m));

  Tensor4 mask = load_mask(p.string());
  CHECK(mask[0] == 0.0f);
  CHECK(mask[1] == 0.0f);
  CHECK(mask[2] == 0.0f);
  CHECK(mask[3] == 1.0f);
  CHECK(mask[4] == 1.0f);

  // writing the binarized mask and reading it back changes nothing
  const fs::path again = dir.path / "again.png";
  save_mask_png(mask, Pad{0, 0}, again.string());
  Tensor4 twice = load_mask(again.string());
  REQUIRE(twice.shape() == mask.shape());
  for (std::int64_t i = 0; i < mask.count(); ++i) CHECK(twice[i] == mask[i]);
}

TEST_CASE("dataset loading sorts, binarizes, pads, and validates") {
  TempDir dir;
  fs::create_directories(dir.path / "image");
  fs::create_directories(dir.path / "groundtruth");
  // created out of name order on purpose; ids must come back sorted
  write_color_png(dir.path / "image" / "b.png", 13, 9);
  write_mask_png(dir.path / "groundtruth" / "b.png", 13, 9);
  write_color_png(dir.path / "image" / "a.png", 16, 24);
  write_mask_png(dir.path / "groundtruth" / "a.png", 16, 24);
  write_color_png(dir.path / "image" / "c.jpg", 8, 8);
  write_mask_png(dir.path / "groundtruth" / "c.png", 8, 8);  // different ext

  std::vector<Sample> samples = load_dataset(dir.path.string(), Layout::cfd);
  REQUIRE(samples.size() == 3);
  CHECK(samples[0].id == "a");
  CHECK(samples[1].id == "b");
  CHECK(samples[2].id == "c");

  for (const Sample& s : samples) {
    CHECK(s.image.shape().c == 3);
    CHECK(s.image.shape().h % 8 == 0);
    CHECK(s.image.shape().w % 8 == 0);
    CHECK(s.mask.shape().h == s.image.shape().h);
    CHECK(s.mask.shape().w == s.image.shape().w);
    for (std::int64_t i = 0; i < s.image.count(); ++i) {
      CHECK(s.image[i] >= 0.0f);
      CHECK(s.image[i] <= 1.0f);
    }
    for (std::int64_t i = 0; i < s.mask.count(); ++i)
      CHECK((s.mask[i] == 0.0f || s.mask[i] == 1.0f));
  }
  // 13x9 image: bottom 13 -> 16 (pad 3), right 9 -> 16 (pad 7)
  CHECK(samples[1].pad.bottom == 3);
  CHECK(samples[1].pad.right == 7);
  CHECK(samples[0].pad.bottom == 0);
  CHECK(samples[0].pad.right == 0);
  // cropping the pad restores the source dimensions
  Tensor4 restored = crop_pad(samples[1].image, samples[1].pad);
  CHECK(restored.shape().h == 13);
  CHECK(restored.shape().w == 9);

  SUBCASE("grayscale layout loads one channel") {
    std::vector<Sample> gray =
        load_dataset(dir.path.string(), Layout::aiglern);
    REQUIRE(gray.size() == 3);
    CHECK(gray[0].image.shape().c == 1);
  }
}

TEST_CASE("dataset loading failure modes") {
  SUBCASE("image without ground truth names the stem") {
    TempDir dir;
    fs::create_directories(dir.path / "image");
    fs::create_directories(dir.path / "groundtruth");
    write_color_png(dir.path / "image" / "orphan.png", 8, 8);
    try {
      load_dataset(dir.path.string(), Layout::cfd);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::usage);
      CHECK(std::string(e.what()).find("orphan") != std::string::npos);
    }
  }
  SUBCASE("empty image directory is a warning, not an error") {
    TempDir dir;
    fs::create_directories(dir.path / "image");
    fs::create_directories(dir.path / "groundtruth");
    CHECK(load_dataset(dir.path.string(), Layout::cfd).empty());
  }
  SUBCASE("missing image directory is an error") {
    TempDir dir;
    CHECK(code_of([&] { load_dataset(dir.path.string(), Layout::cfd); }) ==
          ErrorCode::usage);
  }
  SUBCASE("image and mask sizes must agree") {
    TempDir dir;
    fs::create_directories(dir.path / "image");
    fs::create_directories(dir.path / "groundtruth");
    write_color_png(dir.path / "image" / "x.png", 8, 8);
    write_mask_png(dir.path / "groundtruth" / "x.png", 8, 10);
    CHECK(code_of([&] { load_dataset(dir.path.string(), Layout::cfd); }) ==
          ErrorCode::mismatch);
  }
}

TEST_CASE("train/test splits follow the layout counts") {
  auto fake = [](std::size_t n) {
    std::vector<Sample> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      char buf[8];
      std::snprintf(buf, sizeof buf, "%03zu", i);
      v[i].id = buf;
    }
    return v;
  };
  auto disjoint_cover = [](const DatasetSplit& sp, std::size_t n) {
    std::set<std::string> all(sp.train.begin(), sp.train.end());
    for (const std::string& id : sp.test) {
      CHECK(!all.count(id));
      all.insert(id);
    }
    CHECK(all.size() == n);
  };

  DatasetSplit cfd = split(fake(118), Layout::cfd, 5);
  CHECK(cfd.train.size() == 72);
  CHECK(cfd.test.size() == 46);
  CHECK(cfd.seed == 5);
  disjoint_cover(cfd, 118);

  DatasetSplit aigle = split(fake(38), Layout::aiglern, 5);
  CHECK(aigle.train.size() == 24);
  CHECK(aigle.test.size() == 14);
  disjoint_cover(aigle, 38);

  DatasetSplit gen = split(fake(100), Layout::generic, 5);
  CHECK(gen.train.size() == 62);
  CHECK(gen.test.size() == 38);

  // unexpected count falls back to the layout ratio
  DatasetSplit odd = split(fake(50), Layout::cfd, 5);
  CHECK(odd.train.size() == 31);  // round(50 * 72/118)
  CHECK(odd.test.size() == 19);

  DatasetSplit same = split(fake(118), Layout::cfd, 5);
  CHECK(same.train == cfd.train);
  CHECK(same.test == cfd.test);
  DatasetSplit other = split(fake(118), Layout::cfd, 6);
  CHECK(other.train != cfd.train);

  DatasetSplit none = split({}, Layout::generic, 1);
  CHECK(none.train.empty());
  CHECK(none.test.empty());
}

TEST_CASE("checkpoints round trip bit-exactly for both variants") {
  TempDir dir;
  for (bool mdm : {true, false}) {
    NetworkConfig cfg;
    cfg.base_channels = 4;
    cfg.with_mdm = mdm;
    cfg.with_hf = mdm;  // exercise both switches
    cfg.seed = 31;
    Network net(cfg);
    const fs::path p = dir.path / (mdm ? "full.ckpt" : "plain.ckpt");
    save_checkpoint(net, p.string());

    Checkpoint ck = read_checkpoint(p.string());
    CHECK(ck.config.in_channels == cfg.in_channels);
    CHECK(ck.config.base_channels == cfg.base_channels);
    CHECK(ck.config.dilation_rates == cfg.dilation_rates);
    CHECK(ck.config.with_mdm == cfg.with_mdm);
    CHECK(ck.config.with_hf == cfg.with_hf);
    CHECK(ck.config.seed == cfg.seed);
    REQUIRE(ck.entries.size() == net.param_names().size());
    for (std::size_t i = 0; i < ck.entries.size(); ++i)
      CHECK(ck.entries[i].first == net.param_names()[i]);

    Network loaded = load_network(p.string());
    REQUIRE(loaded.param_names() == net.param_names());
    for (const std::string& name : net.param_names()) {
      const Tensor4& a = net.param(name);
      const Tensor4& b = loaded.param(name);
      REQUIRE(a.shape() == b.shape());
      for (std::int64_t i = 0; i < a.count(); ++i) REQUIRE(a[i] == b[i]);
    }
  }
}

TEST_CASE("checkpoint corruption is reported distinctly") {
  TempDir dir;
  NetworkConfig cfg;
  cfg.base_channels = 4;
  Network net(cfg);
  const fs::path good = dir.path / "good.ckpt";
  save_checkpoint(net, good.string());

  SUBCASE("wrong magic") {
    const fs::path bad = dir.path / "bad.ckpt";
    std::ofstream(bad, std::ios::binary) << "XXXXrest of the file";
    try {
      read_checkpoint(bad.string());
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::mismatch);
      CHECK(std::string(e.what()).find("not a UHDN checkpoint") !=
            std::string::npos);
    }
  }
  SUBCASE("unsupported version") {
    std::fstream f(good, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    char v2[4] = {9, 0, 0, 0};
    f.write(v2, 4);
    f.close();
    try {
      read_checkpoint(good.string());
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::mismatch);
      CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
  }
  SUBCASE("truncated stream") {
    const auto size = fs::file_size(good);
    fs::resize_file(good, size / 2);
    CHECK(code_of([&] { read_checkpoint(good.string()); }) ==
          ErrorCode::mismatch);
  }
  SUBCASE("missing file") {
    CHECK(code_of([&] { read_checkpoint((dir.path / "no.ckpt").string()); }) ==
          ErrorCode::usage);
  }
}

TEST_CASE("parameter sets from different variants refuse to mix") {
  TempDir dir;
  NetworkConfig plain;
  plain.base_channels = 4;
  plain.with_mdm = false;
  Network saved(plain);
  const fs::path p = dir.path / "plain.ckpt";
  save_checkpoint(saved, p.string());

  Checkpoint ck = read_checkpoint(p.string());
  NetworkConfig full;
  full.base_channels = 4;
  Network target(full);
  try {
    install_parameters(target, ck);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::mismatch);
    std::string what = e.what();
    CHECK(what.find("mdm.project.weight") != std::string::npos);       // missing
    CHECK(what.find("bottleneck.conv1.weight") != std::string::npos);  // extra
  }

  // same names, different widths: the shape check fires per tensor
  NetworkConfig wide;
  wide.base_channels = 8;
  wide.with_mdm = false;
  Network big(wide);
  try {
    install_parameters(big, ck);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::mismatch);
    CHECK(std::string(e.what()).find("shape") != std::string::npos);
  }
}

TEST_CASE("probability maps round trip through the float format") {
  TempDir dir;
  Rng rng(602);
  SUBCASE("unpadded map is bit-exact") {
    Tensor4 map = random01(Shape4{1, 1, 14, 15}, rng);
    const fs::path p = dir.path / "m.pfm";
    save_probmap(map, Pad{0, 0}, p.string());
    Tensor4 back = load_probmap(p.string());
    REQUIRE(back.shape() == map.shape());
    for (std::int64_t i = 0; i < map.count(); ++i) REQUIRE(back[i] == map[i]);

    std::ifstream f(p, std::ios::binary);
    std::string header(10, '\0');
    f.read(header.data(), 10);
    CHECK(header == "Pf\n15 14\n-");
  }
  SUBCASE("recorded pad is cropped away on write") {
    Tensor4 map = random01(Shape4{1, 1, 16, 16}, rng);
    const fs::path p = dir.path / "c.pfm";
    save_probmap(map, Pad{1, 2}, p.string());
    Tensor4 back = load_probmap(p.string());
    REQUIRE(back.shape().h == 14);
    REQUIRE(back.shape().w == 15);
    Tensor4 expect = crop_pad(map, Pad{1, 2});
    for (std::int64_t i = 0; i < back.count(); ++i)
      REQUIRE(back[i] == expect[i]);
  }
  SUBCASE("constant map stays constant") {
    Tensor4 map(Shape4{1, 1, 6, 8});
    for (std::int64_t i = 0; i < map.count(); ++i) map[i] = 0.5f;
    const fs::path p = dir.path / "half.pfm";
    save_probmap(map, Pad{0, 0}, p.string());
    Tensor4 back = load_probmap(p.string());
    for (std::int64_t i = 0; i < back.count(); ++i) CHECK(back[i] == 0.5f);
  }
  SUBCASE("out-of-range values are rejected") {
    Tensor4 map(Shape4{1, 1, 2, 2});
    map[0] = 1.5f;
    CHECK(code_of([&] {
            save_probmap(map, Pad{0, 0}, (dir.path / "x.pfm").string());
          }) == ErrorCode::usage);
  }
  SUBCASE("malformed and truncated files are rejected") {
    const fs::path bad = dir.path / "bad.pfm";
    std::ofstream(bad) << "P5\n4 4\n255\n";
    CHECK(code_of([&] { load_probmap(bad.string()); }) == ErrorCode::mismatch);

    Tensor4 map = random01(Shape4{1, 1, 8, 8}, rng);
    const fs::path cut = dir.path / "cut.pfm";
    save_probmap(map, Pad{0, 0}, cut.string());
    fs::resize_file(cut, fs::file_size(cut) - 40);
    CHECK(code_of([&] { load_probmap(cut.string()); }) == ErrorCode::mismatch);

    CHECK(code_of([&] { load_probmap((dir.path / "no.pfm").string()); }) ==
          ErrorCode::usage);
  }
}

TEST_CASE("mask png output crops the pad and survives a reload") {
  TempDir dir;
  Rng rng(603);
  Tensor4 mask(Shape4{1, 1, 16, 16});
  for (std::int64_t i = 0; i < mask.count(); ++i)
    mask[i] = rng.next_uniform() < 0.3 ? 1.0f : 0.0f;
  const fs::path p = dir.path / "mask.png";
  save_mask_png(mask, Pad{1, 2}, p.string());

  Tensor4 back = load_mask(p.string());
  Tensor4 expect = crop_pad(mask, Pad{1, 2});
  REQUIRE(back.shape() == expect.shape());
  for (std::int64_t i = 0; i < back.count(); ++i)
    REQUIRE(back[i] == expect[i]);

  CHECK(code_of([&] {
          save_mask_png(mask, Pad{0, 0},
                        (dir.path / "no_dir" / "mask.png").string());
        }) == ErrorCode::usage);
}
