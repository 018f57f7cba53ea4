#include <catch2/catch_amalgamated.hpp>

#include "voxseg/volume.hpp"

using namespace voxseg;

TEST_CASE("index layout is x fastest, then y, then z") {
  Volume v({4, 3, 2});
  CHECK(v.index(0, 0, 0) == 0);
  CHECK(v.index(1, 0, 0) == 1);
  CHECK(v.index(0, 1, 0) == 4);
  CHECK(v.index(0, 0, 1) == 12);
  CHECK(v.index(3, 2, 1) == 23);
}

TEST_CASE("range tracks the data") {
  Volume v({2, 2, 2}, 5);
  CHECK(v.min_value() == 5);
  CHECK(v.max_value() == 5);
  v.at(1, 1, 1) = 90;
  v.at(0, 0, 0) = 2;
  v.recompute_range();
  CHECK(v.min_value() == 2);
  CHECK(v.max_value() == 90);
}

TEST_CASE("clamped reads replicate edges") {
  Volume v({2, 2, 2});
  v.at(0, 0, 0) = 1;
  v.at(1, 1, 1) = 8;
  CHECK(v.clamped(-5, -1, -2) == 1);
  CHECK(v.clamped(7, 9, 4) == 8);
  CHECK(v.clamped(0, 0, 0) == v.at(0, 0, 0));
}

TEST_CASE("invalid dimensions are rejected") {
  CHECK_THROWS_AS(Volume({0, 4, 4}), ContractError);
  CHECK_THROWS_AS(Volume({4, -1, 4}), ContractError);
  CHECK_THROWS_AS(Volume({2, 2, 2}, std::vector<std::uint16_t>(7)), ContractError);
}

TEST_CASE("label volume validates ids against names") {
  CHECK_THROWS_AS(LabelVolume({2, 2, 2}, {"only-one"}), ContractError);
  std::vector<std::uint8_t> ids(8, 0);
  ids[3] = 5;
  CHECK_THROWS_AS(LabelVolume({2, 2, 2}, ids, {"a", "b"}), ContractError);
  ids[3] = 1;
  CHECK_NOTHROW(LabelVolume({2, 2, 2}, ids, {"a", "b"}));
}

TEST_CASE("level window reads in volume coordinates") {
  Volume v({3, 3, 5});
  for (int z = 0; z < 5; ++z)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) v.at(x, y, z) = std::uint16_t(100 * z + 10 * y + x);

  SECTION("whole volume") {
    const auto w = LevelWindow::whole(v);
    CHECK(w.clamped(1, 2, 3) == 321);
    CHECK(w.clamped(-1, 5, 9) == 420);  // clamps to (0,2,4)
    CHECK(w.covers(0, 4));
    CHECK(w.covers(-3, 10));  // clamped range is inside
  }

  SECTION("z chunk addresses like the full volume") {
    Volume chunk({3, 3, 2});
    for (int z = 0; z < 2; ++z)
      for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) chunk.at(x, y, z) = v.at(x, y, z + 2);
    const LevelWindow w(chunk, 2, v.dims());
    CHECK(w.clamped(1, 1, 2) == v.at(1, 1, 2));
    CHECK(w.clamped(1, 1, 3) == v.at(1, 1, 3));
    CHECK(w.covers(2, 3));
    CHECK_FALSE(w.covers(1, 3));
    CHECK_FALSE(w.covers(2, 4));
  }

  SECTION("mismatched plane extent is rejected") {
    Volume chunk({2, 3, 2});
    CHECK_THROWS_AS(LevelWindow(chunk, 0, v.dims()), ContractError);
  }
}

TEST_CASE("slab partition covers the range with clamped margins") {
  const auto slabs = partition_slabs(10, 4, 3);
  REQUIRE(slabs.size() == 3);
  CHECK(slabs[0].z_lo == 0);
  CHECK(slabs[0].z_hi == 3);
  CHECK(slabs[0].margin_lo == 0);  // clamped at the boundary
  CHECK(slabs[0].margin_hi == 3);
  CHECK(slabs[1].z_lo == 4);
  CHECK(slabs[1].z_hi == 7);
  CHECK(slabs[1].margin_lo == 3);
  CHECK(slabs[1].margin_hi == 2);  // only 2 slices above
  CHECK(slabs[2].z_lo == 8);
  CHECK(slabs[2].z_hi == 9);  // short final slab
  CHECK(slabs[2].margin_hi == 0);

  SECTION("slabs tile [0, nz)") {
    int z = 0;
    for (const auto& s : slabs) {
      CHECK(s.z_lo == z);
      z = s.z_hi + 1;
    }
    CHECK(z == 10);
  }
}

TEST_CASE("single slab when target covers everything") {
  const auto slabs = partition_slabs(6, 100, 2);
  REQUIRE(slabs.size() == 1);
  CHECK(slabs[0].z_lo == 0);
  CHECK(slabs[0].z_hi == 5);
  CHECK(slabs[0].margin_lo == 0);
  CHECK(slabs[0].margin_hi == 0);
}
