// SPDX-License-Identifier: Apache-2.0
#pragma once

// Flat (sequence-free) DICOM data sets.

#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "volumetrica/core/bytes.hpp"
#include "volumetrica/error.hpp"

namespace volumetrica::dicom {

struct Tag {
  std::uint16_t group = 0;
  std::uint16_t element = 0;

  friend constexpr auto operator<=>(const Tag&, const Tag&) = default;
};

inline std::string to_string(Tag t) {
  char buf[12];
  std::snprintf(buf, sizeof buf, "(%04X,%04X)", t.group, t.element);
  return buf;
}

namespace tags {
inline constexpr Tag kMetaGroupLength{0x0002, 0x0000};
inline constexpr Tag kMetaVersion{0x0002, 0x0001};
inline constexpr Tag kMediaSopClass{0x0002, 0x0002};
inline constexpr Tag kMediaSopInstance{0x0002, 0x0003};
inline constexpr Tag kTransferSyntax{0x0002, 0x0010};
inline constexpr Tag kImplementationClass{0x0002, 0x0012};
inline constexpr Tag kSopClass{0x0008, 0x0016};
inline constexpr Tag kSopInstance{0x0008, 0x0018};
inline constexpr Tag kModality{0x0008, 0x0060};
inline constexpr Tag kPatientId{0x0010, 0x0020};
inline constexpr Tag kSliceThickness{0x0018, 0x0050};
inline constexpr Tag kStudyInstance{0x0020, 0x000D};
inline constexpr Tag kSeriesInstance{0x0020, 0x000E};
inline constexpr Tag kInstanceNumber{0x0020, 0x0013};
inline constexpr Tag kImagePosition{0x0020, 0x0032};
inline constexpr Tag kSamplesPerPixel{0x0028, 0x0002};
inline constexpr Tag kPhotometric{0x0028, 0x0004};
inline constexpr Tag kRows{0x0028, 0x0010};
inline constexpr Tag kColumns{0x0028, 0x0011};
inline constexpr Tag kPixelSpacing{0x0028, 0x0030};
inline constexpr Tag kBitsAllocated{0x0028, 0x0100};
inline constexpr Tag kBitsStored{0x0028, 0x0101};
inline constexpr Tag kHighBit{0x0028, 0x0102};
inline constexpr Tag kPixelRepresentation{0x0028, 0x0103};
inline constexpr Tag kRescaleIntercept{0x0028, 0x1052};
inline constexpr Tag kRescaleSlope{0x0028, 0x1053};
inline constexpr Tag kPixelData{0x7FE0, 0x0010};
}  // namespace tags

namespace syntax {
inline constexpr std::string_view kImplicitLittle = "1.2.840.10008.1.2";
inline constexpr std::string_view kExplicitLittle = "1.2.840.10008.1.2.1";
}  // namespace syntax

/// VR used when a data set is read without explicit VRs; "UN" for unknown tags.
inline std::string dictionary_vr(Tag t) {
  static const std::map<Tag, const char*> dict{
      {tags::kMetaGroupLength, "UL"}, {tags::kMetaVersion, "OB"},     {tags::kMediaSopClass, "UI"},
      {tags::kMediaSopInstance, "UI"}, {tags::kTransferSyntax, "UI"}, {tags::kImplementationClass, "UI"},
      {tags::kSopClass, "UI"},         {tags::kSopInstance, "UI"},    {tags::kModality, "CS"},
      {tags::kPatientId, "LO"},        {tags::kSliceThickness, "DS"}, {tags::kStudyInstance, "UI"},
      {tags::kSeriesInstance, "UI"},   {tags::kInstanceNumber, "IS"}, {tags::kImagePosition, "DS"},
      {tags::kSamplesPerPixel, "US"},  {tags::kPhotometric, "CS"},    {tags::kRows, "US"},
      {tags::kColumns, "US"},          {tags::kPixelSpacing, "DS"},   {tags::kBitsAllocated, "US"},
      {tags::kBitsStored, "US"},       {tags::kHighBit, "US"},        {tags::kPixelRepresentation, "US"},
      {tags::kRescaleIntercept, "DS"}, {tags::kRescaleSlope, "DS"},   {tags::kPixelData, "OW"},
  };
  auto it = dict.find(t);
  return it == dict.end() ? "UN" : it->second;
}

inline bool is_string_vr(std::string_view vr) {
  return vr == "AE" || vr == "AS" || vr == "CS" || vr == "DA" || vr == "DS" || vr == "DT" || vr == "IS" ||
         vr == "LO" || vr == "LT" || vr == "PN" || vr == "SH" || vr == "ST" || vr == "TM" || vr == "UC" ||
         vr == "UI" || vr == "UR" || vr == "UT";
}

/// VRs whose explicit encoding carries two reserved bytes and a 32-bit length.
inline bool has_long_length(std::string_view vr) {
  return vr == "OB" || vr == "OD" || vr == "OF" || vr == "OL" || vr == "OV" || vr == "OW" || vr == "SQ" ||
         vr == "UC" || vr == "UN" || vr == "UR" || vr == "UT";
}

struct Element {
  Tag tag;
  std::string vr;
  Bytes value;

  friend bool operator==(const Element&, const Element&) = default;
};

inline std::string trim_value(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && s[b] == ' ') ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\0')) --e;
  return std::string(s.substr(b, e - b));
}

class Dataset {
 public:
  std::map<Tag, Element> elements;
  std::string transfer_syntax{syntax::kExplicitLittle};
  bool conformant = true;  // false when read without preamble and magic

  const Element* find(Tag t) const {
    auto it = elements.find(t);
    return it == elements.end() ? nullptr : &it->second;
  }
  bool has(Tag t) const { return find(t) != nullptr; }

  void set(Tag t, std::string vr, Bytes value) { elements[t] = Element{t, std::move(vr), std::move(value)}; }

  void set_string(Tag t, const std::string& vr, std::string_view s) { set(t, vr, Bytes(s.begin(), s.end())); }

  void set_us(Tag t, std::uint16_t v) { set(t, "US", {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8)}); }

  void set_ds(Tag t, const std::vector<double>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
      char buf[32];
      // DS is limited to 16 characters per value.
      std::snprintf(buf, sizeof buf, "%.10g", values[i]);
      if (std::string_view(buf).size() > 16) std::snprintf(buf, sizeof buf, "%.6g", values[i]);
      s += (i ? "\\" : "") + std::string(buf);
    }
    set_string(t, "DS", s);
  }

  void set_is(Tag t, long v) { set_string(t, "IS", std::to_string(v)); }

  std::optional<std::string> get_string(Tag t) const {
    const auto* e = find(t);
    if (!e) return std::nullopt;
    return trim_value(std::string_view(reinterpret_cast<const char*>(e->value.data()), e->value.size()));
  }

  std::optional<std::uint16_t> get_us(Tag t) const {
    const auto* e = find(t);
    if (!e) return std::nullopt;
    require(e->value.size() >= 2, ErrorCode::malformed, to_string(t) + " is shorter than a US value");
    return static_cast<std::uint16_t>(e->value[0] | (e->value[1] << 8));
  }

  /// Backslash-separated decimal strings.
  std::optional<std::vector<double>> get_ds(Tag t) const {
    auto s = get_string(t);
    if (!s) return std::nullopt;
    std::vector<double> out;
    std::size_t start = 0;
    while (true) {
      const auto end = s->find('\\', start);
      const std::string part = trim_value(std::string_view(*s).substr(start, end == std::string::npos ? std::string::npos : end - start));
      double v = 0;
      const auto* first = part.data();
      const auto* last = part.data() + part.size();
      if (first != last && *first == '+') ++first;
      const auto r = std::from_chars(first, last, v);
      require(!part.empty() && r.ec == std::errc() && r.ptr == last && std::isfinite(v), ErrorCode::malformed,
              "invalid decimal string '" + part + "' in " + to_string(t));
      out.push_back(v);
      if (end == std::string::npos) break;
      start = end + 1;
    }
    return out;
  }

  std::optional<long> get_is(Tag t) const {
    auto s = get_string(t);
    if (!s) return std::nullopt;
    long v = 0;
    const auto* first = s->data();
    const auto* last = s->data() + s->size();
    if (first != last && *first == '+') ++first;
    const auto r = std::from_chars(first, last, v);
    require(!s->empty() && r.ec == std::errc() && r.ptr == last, ErrorCode::malformed,
            "invalid integer string '" + *s + "' in " + to_string(t));
    return v;
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.elements == b.elements && a.transfer_syntax == b.transfer_syntax;
  }
};

}  // namespace volumetrica::dicom
