#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "voxseg/features.hpp"
#include "voxseg/rng.hpp"

using namespace voxseg;

namespace {

Volume random_volume(Dims d, std::uint64_t seed, std::uint32_t hi = 65536) {
  Volume v(d);
  Rng rng(seed);
  for (auto& x : v.data()) x = std::uint16_t(rng.next_below(hi));
  v.recompute_range();
  return v;
}

// Cut each pyramid level down to the z-chunk the slab needs, as the
// out-of-core path would load it from disk.
PyramidWindowSet chunked_windows(const ScalePyramid& p, const FeatureSpec& spec,
                                 const Slab& slab) {
  PyramidWindowSet w;
  w.range = p.global_range();
  w.levels.resize(std::size_t(spec.max_scale()) + 1);
  for (const LevelZRange& lr : level_ranges_for_slab(spec, slab)) {
    const Volume& level = p.levels[std::size_t(lr.scale)];
    const Dims d = level.dims();
    const int z0 = std::clamp(lr.z_lo, 0, d.nz - 1);
    const int z1 = std::clamp(lr.z_hi, 0, d.nz - 1);
    const std::size_t plane = std::size_t(d.nx) * d.ny;
    std::vector<std::uint16_t> data(level.data().begin() + std::size_t(z0) * plane,
                                    level.data().begin() + std::size_t(z1 + 1) * plane);
    auto chunk = std::make_shared<const Volume>(Dims{d.nx, d.ny, z1 - z0 + 1},
                                                std::move(data));
    w.keepalive.push_back(chunk);
    w.levels[std::size_t(lr.scale)] = LevelWindow(*chunk, z0, d);
  }
  return w;
}

}  // namespace

TEST_CASE("feature vector length is 1 + k1 + k2 + 30") {
  FeatureSpec spec;
  spec.hist1 = {0, 4, 16};
  spec.hist2 = {1, 8, 32};
  spec.lbp = {0, 4};
  CHECK(spec.length() == 1 + 16 + 32 + 30);
  CHECK(spec.max_scale() == 1);
  CHECK(feature_column_names(spec).size() == std::size_t(spec.length()));
}

TEST_CASE("spec validation rejects out-of-domain values") {
  FeatureSpec ok;
  CHECK_NOTHROW(ok.validate());

  FeatureSpec bad = ok;
  bad.hist1.scale = 1;
  CHECK_THROWS_AS(bad.validate(), ContractError);

  bad = ok;
  bad.hist2.bins = 12;
  CHECK_THROWS_AS(bad.validate(), ContractError);

  bad = ok;
  bad.lbp.radius = 0;
  CHECK_THROWS_AS(bad.validate(), ContractError);

  bad = ok;
  bad.hist2.scale = -1;
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("spec round-trips through json") {
  FeatureSpec spec;
  spec.hist1 = {0, 3, 8};
  spec.hist2 = {2, 5, 32};
  spec.lbp = {1, 2};
  const nlohmann::json j = spec;
  const FeatureSpec back = j.get<FeatureSpec>();
  CHECK(back.hist1.radius == 3);
  CHECK(back.hist2.scale == 2);
  CHECK(back.hist2.bins == 32);
  CHECK(back.lbp.scale == 1);
  CHECK(back.lbp.radius == 2);
}

TEST_CASE("required margin covers the widest window at scale 0") {
  FeatureSpec spec;
  spec.hist1 = {0, 4, 16};
  spec.hist2 = {0, 2, 8};
  spec.lbp = {0, 1};
  CHECK(required_margin_scale0(spec) == 4);  // hist1 dominates at scale 0

  spec.hist2 = {1, 8, 16};  // (8+1)<<1 = 18 scale-0 slices
  CHECK(required_margin_scale0(spec) == 18);

  spec.hist2 = {0, 2, 8};
  spec.lbp = {2, 4};  // ring +1: (4+1+1)<<2 = 24
  CHECK(required_margin_scale0(spec) == 24);
}

TEST_CASE("level ranges scale the slab and pad by the window need") {
  FeatureSpec spec;
  spec.hist1 = {0, 3, 8};
  spec.hist2 = {1, 2, 8};
  spec.lbp = {1, 1};
  const Slab slab{16, 23, 8, 8};
  const auto ranges = level_ranges_for_slab(spec, slab);
  REQUIRE(ranges.size() == 2);
  CHECK(ranges[0].scale == 0);
  CHECK(ranges[0].z_lo == 13);  // 16 - 3
  CHECK(ranges[0].z_hi == 26);  // 23 + 3
  CHECK(ranges[1].scale == 1);
  // scale 1 need = max(hist2 r=2, lbp r+1=2) = 2 around [8, 11]
  CHECK(ranges[1].z_lo == 6);
  CHECK(ranges[1].z_hi == 13);
}

TEST_CASE("center feature normalizes into [0,1] and zeroes constants") {
  CHECK(center_feature(100, {100, 300}) == 0.0);
  CHECK(center_feature(300, {100, 300}) == 1.0);
  CHECK(center_feature(200, {100, 300}) == Catch::Approx(0.5));
  CHECK(center_feature(42, {42, 42}) == 0.0);
}

TEST_CASE("assembled vector has unit-sum histogram segments") {
  const Volume v = random_volume({16, 16, 16}, 31);
  const ScalePyramid p = build_pyramid(v, 1);
  FeatureSpec spec;
  spec.hist1 = {0, 2, 8};
  spec.hist2 = {1, 2, 16};
  spec.lbp = {0, 2};
  const auto row = assemble_feature_vector(p, {5, 6, 7}, spec);
  REQUIRE(int(row.size()) == spec.length());

  auto sum = [&](std::size_t b, std::size_t n) {
    double s = 0;
    for (std::size_t i = b; i < b + n; ++i) s += row[i];
    return s;
  };
  CHECK(row[0] >= 0.0);
  CHECK(row[0] <= 1.0);
  CHECK(sum(1, 8) == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(sum(9, 16) == Catch::Approx(1.0).epsilon(1e-12));
  for (int plane = 0; plane < 3; ++plane)
    CHECK(sum(25 + std::size_t(plane) * 10, 10) == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("slab extractor rows equal the reference assembly bit for bit") {
  const Volume v = random_volume({12, 10, 16}, 32);
  const ScalePyramid p = build_pyramid(v, 2);
  const PyramidWindowSet w = whole_pyramid_windows(p);

  FeatureSpec spec;
  spec.hist1 = {0, 2, 8};
  spec.hist2 = {1, 2, 8};
  spec.lbp = {1, 1};
  const int margin = required_margin_scale0(spec);

  for (const Slab& slab : partition_slabs(16, 5, margin)) {
    int n = 0;
    for_each_slab_feature(w, slab, spec, [&](Coord c, std::span<const double> row) {
      const auto ref = assemble_feature_vector(w, c, spec);
      REQUIRE(std::vector<double>(row.begin(), row.end()) == ref);
      ++n;
    });
    CHECK(n == 12 * 10 * slab.owned_slices());
  }
}

TEST_CASE("scale-2 specs agree with the reference too") {
  const Volume v = random_volume({9, 9, 24}, 33);
  const ScalePyramid p = build_pyramid(v, 2);
  const PyramidWindowSet w = whole_pyramid_windows(p);

  FeatureSpec spec;
  spec.hist1 = {0, 1, 8};
  spec.hist2 = {2, 1, 8};
  spec.lbp = {2, 1};
  const Slab whole{0, 23, 0, 0};
  for_each_slab_feature(w, whole, spec, [&](Coord c, std::span<const double> row) {
    REQUIRE(std::vector<double>(row.begin(), row.end()) == assemble_feature_vector(w, c, spec));
  });
}

TEST_CASE("chunked level windows reproduce whole-volume rows") {
  const Volume v = random_volume({10, 8, 32}, 34);
  const ScalePyramid p = build_pyramid(v, 1);
  const PyramidWindowSet whole = whole_pyramid_windows(p);

  FeatureSpec spec;
  spec.hist1 = {0, 2, 8};
  spec.hist2 = {1, 3, 8};
  spec.lbp = {0, 2};
  const int margin = required_margin_scale0(spec);

  for (const Slab& slab : partition_slabs(32, 9, margin)) {
    const PyramidWindowSet chunked = chunked_windows(p, spec, slab);
    std::vector<std::vector<double>> whole_rows, chunk_rows;
    for_each_slab_feature(whole, slab, spec, [&](Coord, std::span<const double> r) {
      whole_rows.emplace_back(r.begin(), r.end());
    });
    for_each_slab_feature(chunked, slab, spec, [&](Coord, std::span<const double> r) {
      chunk_rows.emplace_back(r.begin(), r.end());
    });
    REQUIRE(whole_rows == chunk_rows);
  }
}

TEST_CASE("insufficient margins are rejected up front") {
  const Volume v = random_volume({8, 8, 24}, 35);
  const ScalePyramid p = build_pyramid(v, 1);
  const PyramidWindowSet w = whole_pyramid_windows(p);
  FeatureSpec spec;
  spec.hist1 = {0, 4, 8};
  spec.hist2 = {1, 2, 8};
  spec.lbp = {0, 1};
  const Slab interior{8, 15, 2, 2};  // needs margin max(4, (2+1)<<1=6) = 6
  CHECK_THROWS_AS(SlabFeatureRun(w, interior, spec), ContractError);

  const Slab padded{8, 15, 6, 6};
  CHECK_NOTHROW(SlabFeatureRun(w, padded, spec));
}

TEST_CASE("missing pyramid level is rejected") {
  const Volume v = random_volume({8, 8, 8}, 36);
  const ScalePyramid p = build_pyramid(v, 0);  // scale 0 only
  const PyramidWindowSet w = whole_pyramid_windows(p);
  FeatureSpec spec;
  spec.hist2 = {1, 2, 8};
  CHECK_THROWS_AS(assemble_feature_vector(w, {4, 4, 4}, spec), ContractError);
}

TEST_CASE("mask filters rows and coords stay aligned") {
  const Volume v = random_volume({6, 6, 12}, 37);
  const ScalePyramid p = build_pyramid(v, 0);
  const PyramidWindowSet w = whole_pyramid_windows(p);
  FeatureSpec spec;
  spec.hist1 = {0, 1, 8};
  spec.hist2 = {0, 1, 8};
  spec.lbp = {0, 1};
  const Slab slab{3, 8, 2, 2};
  const SlabFeatures all = extract_features_slab(w, slab, spec);
  const SlabFeatures even =
      extract_features_slab(w, slab, spec, [](Coord c) { return c.z % 2 == 0; });
  CHECK(all.matrix.rows() == 6 * 6 * 6);
  CHECK(even.matrix.rows() == 6 * 6 * 3);
  for (const Coord& c : even.coords) CHECK(c.z % 2 == 0);
  // Matching rows are identical across the two extractions.
  std::size_t j = 0;
  for (std::size_t i = 0; i < all.coords.size(); ++i) {
    if (all.coords[i].z % 2 != 0) continue;
    const auto a = all.matrix.row(i);
    const auto b = even.matrix.row(j++);
    REQUIRE(std::vector<double>(a.begin(), a.end()) ==
            std::vector<double>(b.begin(), b.end()));
  }
}

TEST_CASE("csv dump writes a header and one line per row") {
  FeatureMatrix m(3);
  m.push_row(std::array{1.0, 2.0, 3.0});
  m.push_row(std::array{4.0, 5.0, 6.0});
  std::ostringstream os;
  write_features_csv(m, {"a", "b", "c"}, os);
  CHECK(os.str() == "a,b,c\n1,2,3\n4,5,6\n");
}
