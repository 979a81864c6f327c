// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "dicom_fixtures.hpp"
#include "volumetrica/core/random.hpp"
#include "volumetrica/dicom/series.hpp"

using namespace volumetrica;
using namespace volumetrica::dicom;

using namespace dicom_fixtures;

TEST(DicomCodec, MinimalDatasetRoundTrip) {
  const auto ds = minimal_slice();
  const auto bytes = write_file(ds);
  EXPECT_EQ(std::string(bytes.begin() + 128, bytes.begin() + 132), "DICM");
  const auto back = parse_file(bytes);
  EXPECT_TRUE(back.conformant);
  EXPECT_EQ(back, ds);
  EXPECT_EQ(*back.get_us(tags::kRows), 4);
  EXPECT_EQ(back.find(tags::kPixelData)->value.size(), 32u);
  EXPECT_EQ(write_file(back), bytes);
}

TEST(DicomCodec, RandomDatasetsRoundTripBitExact) {
  CounterRng rng(2024);
  for (int i = 0; i < 100; ++i) {
    const auto ds = random_dataset(rng);
    const auto bytes = write_file(ds);
    const auto back = parse_file(bytes);
    EXPECT_EQ(back, ds) << i;
    EXPECT_EQ(write_file(back), bytes) << i;
  }
}

TEST(DicomCodec, OddLengthValuePaddedAndLogged) {
  Dataset ds;
  ds.set_string(tags::kModality, "CS", "CTX");
  ds.set_string(tags::kSopInstance, "UI", "1.2.3");
  std::vector<std::string> log;
  const auto back = parse_file(write_file(ds, {}, &log));
  EXPECT_EQ(log.size(), 2u);
  EXPECT_EQ(back.find(tags::kModality)->value.size(), 4u);
  EXPECT_EQ(back.find(tags::kModality)->value.back(), ' ');
  EXPECT_EQ(back.find(tags::kSopInstance)->value.back(), '\0');
  EXPECT_EQ(*back.get_string(tags::kModality), "CTX");
  EXPECT_EQ(*back.get_string(tags::kSopInstance), "1.2.3");
}

TEST(DicomCodec, EmptyDatasetHasMetaOnly) {
  const auto bytes = write_file(Dataset{});
  const auto back = parse_file(bytes);
  EXPECT_TRUE(back.elements.empty());
  EXPECT_EQ(back.transfer_syntax, syntax::kExplicitLittle);
}

TEST(DicomCodec, ForcedModeWithoutPreamble) {
  Dataset ds = minimal_slice();
  ds.transfer_syntax = std::string(syntax::kImplicitLittle);
  ds.set_ds(tags::kPixelSpacing, {0.5, 0.75});
  WriteOptions opt;
  opt.file_meta = false;
  const auto back = parse_file(write_file(ds, opt));
  EXPECT_FALSE(back.conformant);
  EXPECT_EQ(back, ds);
}

TEST(DicomCodec, CompressedSyntaxRejected) {
  ByteWriter w;
  w.raw(Bytes(128, 0));
  w.text("DICM");
  detail::write_element(w, Element{tags::kTransferSyntax, "UI", Bytes{'1', '.', '2', '.', '8', '4', '0', '.', '1', '0', '0',
                                                                      '0', '8', '.', '1', '.', '2', '.', '4', '.', '5', '0'}},
                        true);
  const auto bytes = w.take();
  try {
    parse_file(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unsupported_syntax);
  }
}

TEST(DicomCodec, TruncationNeverYieldsGarbage) {
  const auto ds = minimal_slice(6, 5);
  for (const auto& ts : {syntax::kExplicitLittle, syntax::kImplicitLittle}) {
    Dataset d = ds;
    d.transfer_syntax = std::string(ts);
    const auto bytes = write_file(d);
    for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
      const std::span<const std::uint8_t> part(bytes.data(), cut);
      try {
        const auto got = parse_file(part);
        // A cut on an element boundary is a valid shorter file: its elements
        // must be an exact subset of the original.
        for (const auto& [tag, e] : got.elements) {
          if (!got.conformant) continue;
          ASSERT_TRUE(d.has(tag)) << cut;
          EXPECT_EQ(*d.find(tag), e) << cut;
        }
      } catch (const ParseError& e) {
        EXPECT_LE(e.offset(), cut);
      } catch (const Error&) {
      }
    }
  }
}

TEST(DicomCodec, TruncatedElementReportsOffset) {
  const auto bytes = write_file(minimal_slice());
  const std::span<const std::uint8_t> part(bytes.data(), bytes.size() - 3);
  try {
    parse_file(part);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.code(), ErrorCode::truncated);
    EXPECT_GT(e.offset(), 132u);
  }
}

TEST(DicomCodec, RandomByteCorruptionIsContained) {
  const auto bytes = write_file(minimal_slice(8, 8));
  CounterRng rng(9);
  for (int i = 0; i < 500; ++i) {
    auto b = bytes;
    for (int k = 0; k < 3; ++k) b[rng.below(b.size())] = std::uint8_t(rng.below(256));
    try {
      parse_file(b);
    } catch (const Error&) {
    }
  }
  SUCCEED();
}

TEST(DicomCodec, OversizedShortValueRejected) {
  Dataset ds;
  ds.set_string(tags::kPatientId, "LO", std::string(70000, 'x'));
  try {
    write_file(ds);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::size_limit);
  }
}

TEST(DicomValues, DecimalAndIntegerStrings) {
  Dataset ds;
  ds.set_string(tags::kPixelSpacing, "DS", " 0.5\\+0.75 ");
  ds.set_string(tags::kInstanceNumber, "IS", "12 ");
  EXPECT_EQ(*ds.get_ds(tags::kPixelSpacing), (std::vector<double>{0.5, 0.75}));
  EXPECT_EQ(*ds.get_is(tags::kInstanceNumber), 12);
  ds.set_string(tags::kSliceThickness, "DS", "abc");
  EXPECT_THROW(ds.get_ds(tags::kSliceThickness), Error);
}

TEST(DicomSeries, ShuffledSlicesSortedByPosition) {
  std::vector<Dataset> slices;
  for (int z : {2, 0, 1}) {
    auto ds = minimal_slice(2, 3);
    ds.set_ds(tags::kImagePosition, {0, 0, 5.0 + 2.5 * z});
    ds.set_is(tags::kInstanceNumber, 10 - z);  // ignored: positions take precedence
    std::vector<std::uint8_t> px(12);
    for (std::size_t i = 0; i < 6; ++i) px[2 * i] = std::uint8_t(10 * z + i);
    ds.set(tags::kPixelData, "OW", px);
    ds.set_ds(tags::kPixelSpacing, {0.8, 0.6});
    ds.set_ds(tags::kSliceThickness, {2.5});
    slices.push_back(ds);
  }
  const auto s = read_series(slices);
  EXPECT_EQ(s.geometry.sort_key, SliceSortKey::image_position_z);
  EXPECT_EQ(s.geometry.slice_order[0].input_index, 1u);
  EXPECT_EQ(s.geometry.slice_order[1].input_index, 2u);
  EXPECT_EQ(s.geometry.slice_order[2].input_index, 0u);
  EXPECT_EQ(s.grid.dims(), (Dims{3, 2, 3}));
  for (std::size_t z = 0; z < 3; ++z) EXPECT_EQ(s.grid.at(1, 1, z), 10.0 * double(z) + 4);
  // Row spacing (y) is listed first.
  EXPECT_EQ(s.grid.spacing().sy, 0.8);
  EXPECT_EQ(s.grid.spacing().sx, 0.6);
  EXPECT_EQ(s.grid.spacing().sz, 2.5);
  EXPECT_TRUE(s.geometry.uniform_gaps);
  EXPECT_TRUE(s.warnings.empty());
}

TEST(DicomSeries, InstanceNumberFallbackAndStableOrder) {
  std::vector<Dataset> slices;
  for (int n : {3, 1, 3, 2}) {
    auto ds = minimal_slice(1, 1);
    ds.set_is(tags::kInstanceNumber, n);
    ds.set(tags::kPixelData, "OW", {std::uint8_t(slices.size()), 0});
    slices.push_back(ds);
  }
  const auto s = read_series(slices);
  EXPECT_EQ(s.geometry.sort_key, SliceSortKey::instance_number);
  std::vector<double> got(s.grid.data().begin(), s.grid.data().end());
  EXPECT_EQ(got, (std::vector<double>{1, 3, 0, 2}));
}

TEST(DicomSeries, MissingSpacingDefaultsWithWarnings) {
  const auto s = read_series({minimal_slice(), minimal_slice()});
  EXPECT_EQ(s.grid.spacing(), (Spacing{1, 1, 1}));
  EXPECT_EQ(s.geometry.sort_key, SliceSortKey::input_order);
  ASSERT_EQ(s.warnings.size(), 2u);
  for (const auto& w : s.warnings) EXPECT_NE(w.find("assigning default values"), std::string::npos) << w;
}

TEST(DicomSeries, NoValidImages) {
  try {
    read_series({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::no_valid_images);
    EXPECT_STREQ(e.what(), "No valid DICOM images found");
  }
  Dataset no_pixels;
  no_pixels.set_us(tags::kRows, 2);
  EXPECT_THROW(read_series({no_pixels}), Error);
}

TEST(DicomSeries, MismatchedDimsRejected) {
  try {
    read_series({minimal_slice(4, 4), minimal_slice(4, 5)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::geometry_mismatch);
  }
}

TEST(DicomSeries, RescaleIsExactAffineMap) {
  auto ds = minimal_slice(1, 3);
  ds.set_us(tags::kPixelRepresentation, 1);
  ds.set(tags::kPixelData, "OW", {0x05, 0x00, 0xFF, 0xFF, 0x00, 0x80});  // 5, -1, -32768
  ds.set_ds(tags::kRescaleSlope, {0.37});
  ds.set_ds(tags::kRescaleIntercept, {-1024});
  const auto s = read_series({ds});
  EXPECT_EQ(s.grid.at(0, 0, 0), 0.37 * 5.0 + -1024.0);
  EXPECT_EQ(s.grid.at(1, 0, 0), 0.37 * -1.0 + -1024.0);
  EXPECT_EQ(s.grid.at(2, 0, 0), 0.37 * -32768.0 + -1024.0);
}

TEST(DicomSeries, EightBitUnsigned) {
  auto ds = minimal_slice(2, 2);
  ds.set_us(tags::kBitsAllocated, 8);
  ds.set(tags::kPixelData, "OW", {1, 2, 250, 4});
  const auto s = read_series({ds});
  EXPECT_EQ(s.grid.at(0, 1, 0), 250.0);
}

TEST(DicomSeries, UnevenGapsFlagged) {
  std::vector<Dataset> slices;
  for (double z : {0.0, 1.0, 3.0}) {
    auto ds = minimal_slice(1, 1);
    ds.set_ds(tags::kImagePosition, {0, 0, z});
    slices.push_back(ds);
  }
  EXPECT_FALSE(read_series(slices).geometry.uniform_gaps);
}

TEST(DicomSeries, GridExportRoundTrip) {
  CounterRng rng(3);
  std::vector<double> v(5 * 4 * 3);
  for (auto& x : v) x = rng.uniform(-2, 5);
  VoxelGrid g({5, 4, 3}, {0.7, 0.9, 2.0}, v);
  auto sets = grid_to_datasets(g);
  std::reverse(sets.begin(), sets.end());
  std::vector<Dataset> parsed;
  for (const auto& d : sets) parsed.push_back(parse_file(write_file(d)));
  const auto s = read_series(parsed);
  EXPECT_EQ(s.grid.dims(), g.dims());
  EXPECT_EQ(s.grid.spacing(), g.spacing());
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(s.grid.data()[i], v[i], 0.5 / 1024 + 1e-12);
}
