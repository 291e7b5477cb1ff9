#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "tte/dataset.hpp"
#include "tte/errors.hpp"
#include "tte/kernels.hpp"

using namespace tte;

namespace {

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("generation is seed-deterministic and in range") {
  Dataset a = generate(40, 4, 20, 20, 7);
  Dataset b = generate(40, 4, 20, 20, 7);
  CHECK(a.images.bitwise_equal(b.images));
  CHECK(a.labels == b.labels);

  Dataset c = generate(40, 4, 20, 20, 8);
  CHECK(!a.images.bitwise_equal(c.images));

  for (int64_t i = 0; i < a.images.numel(); ++i) {
    CHECK(a.images[i] >= 0.0);
    CHECK(a.images[i] <= 1.0);
  }
  for (uint8_t l : a.labels) CHECK(l < 4);
  CHECK(a.labels.size() == 40);
}

TEST_CASE("generate rejects invalid dims") {
  CHECK_THROWS_AS(generate(10, 4, 15, 20, 1), DataError);
  CHECK_THROWS_AS(generate(10, 1, 20, 20, 1), DataError);
  CHECK_THROWS_AS(generate(10, 11, 20, 20, 1), DataError);
  CHECK_THROWS_AS(generate(0, 4, 20, 20, 1), DataError);
}

TEST_CASE("every glyph stencil is mirror-symmetric in dx") {
  // structural flip-label invariance: the stencil decides the glyph layer, so
  // evenness in dx means flip(image) renders the same class at mirrored center
  for (int h : {16, 20, 24}) {
    const double r = glyph_radius(h, h);
    for (int cls = 0; cls < 10; ++cls)
      for (double dx = -r - 1.0; dx <= r + 1.0; dx += 0.13)
        for (double dy = -r - 1.0; dy <= r + 1.0; dy += 0.17)
          CHECK(glyph_stencil(cls, dx, dy, r) == glyph_stencil(cls, -dx, dy, r));
  }
}

TEST_CASE("flip of a rendered glyph equals the glyph at mirrored center") {
  const int h = 20, w = 20;
  const double r = glyph_radius(h, w);
  const double c0 = (w - 1) / 2.0;
  for (int cls = 0; cls < 10; ++cls) {
    // dyadic jitter offsets keep both renderings exact in float arithmetic
    for (double u : {-3.0, -1.25, 0.5, 2.75}) {
      Tensor g = render_glyph(cls, c0 + u, 10.25, 0.8, h, w, r);
      Tensor flipped = kernels::flip_w(g.reshaped({1, 1, h, w}));
      Tensor mirrored = render_glyph(cls, c0 - u, 10.25, 0.8, h, w, r);
      CHECK(flipped.bitwise_equal(mirrored.reshaped({1, 1, h, w})));
    }
  }
}

TEST_CASE("glyph support leaves a 4 px translation margin") {
  for (int h : {16, 20, 24}) {
    const double r = glyph_radius(h, h);
    const double c0 = (h - 1) / 2.0;
    for (int cls = 0; cls < 10; ++cls)
      for (double ux : {-3.0, 3.0})
        for (double uy : {-3.0, 3.0}) {
          Tensor g = render_glyph(cls, c0 + ux, c0 + uy, 1.0, h, h, r);
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < h; ++x)
              if (g[int64_t(y) * h + x] != 0.0) {
                CHECK(x >= 4);
                CHECK(x <= h - 5);
                CHECK(y >= 4);
                CHECK(y <= h - 5);
              }
        }
  }
}

TEST_CASE("save/load round-trip is bitwise") {
  Dataset ds = generate(25, 6, 18, 22, 99);
  const std::string path = tmp_path("tte_roundtrip.tted");
  save(ds, path);
  Dataset back = load(path);
  CHECK(back.images.bitwise_equal(ds.images));
  CHECK(back.labels == ds.labels);
  CHECK(back.num_classes == ds.num_classes);
  std::remove(path.c_str());
}

TEST_CASE("load rejects corrupted files") {
  Dataset ds = generate(5, 2, 16, 16, 1);
  const std::string path = tmp_path("tte_corrupt.tted");
  save(ds, path);

  // corrupted magic
  {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    std::fputs("NOPE", f);
    std::fclose(f);
    CHECK_THROWS_WITH_AS(load(path), doctest::Contains("bad magic"), DataError);
  }
  // truncated
  save(ds, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  CHECK_THROWS_AS(load(path), DataError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load(path), DataError);  // missing file
}

TEST_CASE("split is seed-deterministic, disjoint and exhaustive") {
  Dataset ds = generate(1200, 4, 16, 16, 3);
  auto [train, test] = split(ds, 0.8, 17);
  CHECK(train.b() + test.b() == ds.b());
  CHECK(train.b() == 960);

  auto [train2, test2] = split(ds, 0.8, 17);
  CHECK(train.images.bitwise_equal(train2.images));
  CHECK(test.images.bitwise_equal(test2.images));

  auto [train3, _] = split(ds, 0.8, 18);
  CHECK(!train.images.bitwise_equal(train3.images));

  // class proportions of train within +-5 points of overall (B >= 1000)
  std::vector<int> all_counts(4, 0), train_counts(4, 0);
  for (uint8_t l : ds.labels) ++all_counts[l];
  for (uint8_t l : train.labels) ++train_counts[l];
  for (int k = 0; k < 4; ++k) {
    double overall = double(all_counts[k]) / ds.b();
    double in_train = double(train_counts[k]) / train.b();
    CHECK(std::fabs(overall - in_train) < 0.05);
  }

  CHECK_THROWS_AS(split(ds, 0.0, 1), DataError);
  CHECK_THROWS_AS(split(ds, 1.0, 1), DataError);
  Dataset tiny = generate(3, 2, 16, 16, 5);
  CHECK_THROWS_AS(split(tiny, 0.1, 1), DataError);  // zero-sized train side
}
