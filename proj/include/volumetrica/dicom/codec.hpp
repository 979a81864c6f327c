// SPDX-License-Identifier: Apache-2.0
#pragma once

// Part-10 style files: 128-byte preamble, "DICM", explicit-VR group 0002,
// then the data set in explicit or implicit VR little endian.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "volumetrica/dicom/dataset.hpp"

namespace volumetrica::dicom {

inline constexpr std::size_t kPreambleSize = 128;
inline constexpr std::uint32_t kUndefinedLength = 0xFFFFFFFFu;
inline constexpr std::string_view kImplementationUid = "1.2.826.0.1.3680043.10.1187.1";

namespace detail {

inline bool is_supported_syntax(std::string_view ts) {
  return ts == syntax::kExplicitLittle || ts == syntax::kImplicitLittle;
}

inline Element read_element(ByteReader& r, bool explicit_vr) {
  const std::size_t start = r.pos();
  Tag tag;
  tag.group = r.u16();
  tag.element = r.u16();
  std::string vr;
  std::uint32_t length;
  if (explicit_vr) {
    vr = r.text(2);
    for (char c : vr)
      if (c < 'A' || c > 'Z') throw ParseError(ErrorCode::malformed, "invalid VR in " + to_string(tag), start + 4);
    if (has_long_length(vr)) {
      r.u16();
      length = r.u32();
    } else {
      length = r.u16();
    }
  } else {
    vr = dictionary_vr(tag);
    length = r.u32();
  }
  if (vr == "SQ" || length == kUndefinedLength)
    throw ParseError(ErrorCode::unsupported_syntax, "sequences and undefined lengths are not supported " + to_string(tag),
                     start);
  const auto value = r.raw(length);
  return Element{tag, std::move(vr), Bytes(value.begin(), value.end())};
}

inline void write_element(ByteWriter& w, const Element& e, bool explicit_vr) {
  w.u16(e.tag.group);
  w.u16(e.tag.element);
  if (explicit_vr) {
    require(e.vr.size() == 2, ErrorCode::invalid_argument, "VR of " + to_string(e.tag) + " must be two letters");
    w.text(e.vr);
    if (has_long_length(e.vr)) {
      require(e.value.size() < kUndefinedLength, ErrorCode::size_limit,
              "value of " + to_string(e.tag) + " exceeds the 32-bit length field");
      w.u16(0);
      w.u32(static_cast<std::uint32_t>(e.value.size()));
    } else {
      require(e.value.size() <= 0xFFFF, ErrorCode::size_limit,
              "value of " + to_string(e.tag) + " exceeds the 16-bit length field of VR " + e.vr);
      w.u16(static_cast<std::uint16_t>(e.value.size()));
    }
  } else {
    require(e.value.size() < kUndefinedLength, ErrorCode::size_limit,
            "value of " + to_string(e.tag) + " exceeds the 32-bit length field");
    w.u32(static_cast<std::uint32_t>(e.value.size()));
  }
  w.raw(e.value);
}

inline void read_body(ByteReader& r, bool explicit_vr, Dataset& ds) {
  while (!r.at_end()) {
    const std::size_t start = r.pos();
    auto e = read_element(r, explicit_vr);
    if (ds.elements.count(e.tag))
      throw ParseError(ErrorCode::malformed, "duplicate element " + to_string(e.tag), start);
    ds.elements.emplace(e.tag, std::move(e));
  }
}

}  // namespace detail

/// Parses a file image. Input without preamble and magic is read as a bare
/// implicit-VR stream and marked non-conformant.
inline Dataset parse_file(std::span<const std::uint8_t> bytes) {
  Dataset ds;
  const bool has_magic = bytes.size() >= kPreambleSize + 4 &&
                         std::string_view(reinterpret_cast<const char*>(bytes.data()) + kPreambleSize, 4) == "DICM";
  if (!has_magic) {
    ds.conformant = false;
    ds.transfer_syntax = std::string(syntax::kImplicitLittle);
    ByteReader r(bytes);
    detail::read_body(r, false, ds);
    return ds;
  }
  ByteReader r(bytes, kPreambleSize + 4);
  std::optional<std::string> ts;
  while (r.remaining() >= 2) {
    ByteReader peek(bytes, r.pos());
    if (peek.u16() != 0x0002) break;
    auto e = detail::read_element(r, true);
    if (e.tag == tags::kTransferSyntax)
      ts = trim_value(std::string_view(reinterpret_cast<const char*>(e.value.data()), e.value.size()));
  }
  const std::size_t body = r.pos();
  if (!ts) throw ParseError(ErrorCode::malformed, "file meta information lacks a transfer syntax", kPreambleSize + 4);
  if (!detail::is_supported_syntax(*ts))
    throw ParseError(ErrorCode::unsupported_syntax, "unsupported transfer syntax " + *ts, body);
  ds.transfer_syntax = *ts;
  detail::read_body(r, *ts == syntax::kExplicitLittle, ds);
  return ds;
}

struct WriteOptions {
  bool file_meta = true;  // false writes a bare implicit-VR stream
  std::string sop_class{"1.2.840.10008.5.1.4.1.1.2"};
  std::string sop_instance{"2.25.1"};
};

/// Encodes in the data set's transfer syntax. Odd-length values are padded
/// (space for strings, NUL otherwise) and each pad is reported in `log`.
inline Bytes write_file(const Dataset& ds, const WriteOptions& opt = {}, std::vector<std::string>* log = nullptr) {
  require(detail::is_supported_syntax(ds.transfer_syntax), ErrorCode::unsupported_syntax,
          "cannot write transfer syntax " + ds.transfer_syntax);
  auto padded = [&](const Element& e, bool report = true) {
    if (e.value.size() % 2 == 0) return e;
    Element p = e;
    p.value.push_back(is_string_vr(e.vr) && e.vr != "UI" ? ' ' : '\0');
    if (log && report) log->push_back("padded odd-length value of " + to_string(e.tag) + " (" + e.vr + ")");
    return p;
  };
  ByteWriter w;
  bool explicit_vr = ds.transfer_syntax == syntax::kExplicitLittle;
  if (opt.file_meta) {
    w.raw(Bytes(kPreambleSize, 0));
    w.text("DICM");
    Dataset meta;
    meta.set(tags::kMetaVersion, "OB", {0x00, 0x01});
    meta.set_string(tags::kMediaSopClass, "UI", opt.sop_class);
    meta.set_string(tags::kMediaSopInstance, "UI", opt.sop_instance);
    meta.set_string(tags::kTransferSyntax, "UI", ds.transfer_syntax);
    meta.set_string(tags::kImplementationClass, "UI", kImplementationUid);
    ByteWriter mw;
    for (const auto& [tag, e] : meta.elements) detail::write_element(mw, padded(e, false), true);
    detail::write_element(w, Element{tags::kMetaGroupLength, "UL",
                                     {static_cast<std::uint8_t>(mw.size()), static_cast<std::uint8_t>(mw.size() >> 8),
                                      static_cast<std::uint8_t>(mw.size() >> 16), static_cast<std::uint8_t>(mw.size() >> 24)}},
                          true);
    w.raw(mw.buffer());
  } else {
    require(ds.transfer_syntax == syntax::kImplicitLittle, ErrorCode::invalid_argument,
            "a bare stream must use implicit VR little endian");
    explicit_vr = false;
  }
  for (const auto& [tag, e] : ds.elements) {
    require(tag.group != 0x0002, ErrorCode::invalid_argument, "group 0002 is generated by the writer");
    require(e.vr != "SQ", ErrorCode::unsupported_syntax, "sequences are not supported");
    detail::write_element(w, padded(e), explicit_vr);
  }
  return w.take();
}

inline Dataset read_file(const std::string& path) { return parse_file(read_file_bytes(path)); }

}  // namespace volumetrica::dicom
