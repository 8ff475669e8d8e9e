#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "elemrag/error.hpp"
#include "elemrag/text.hpp"

namespace elemrag {

// Element taxonomy emitted by document-understanding models. Any type string
// outside this set is ingested as UncategorizedText.
enum class ElementType {
  NarrativeText,
  Title,
  ListItem,
  UncategorizedText,
  Footer,
  Table,
  Header,
  Image,
  FigureCaption,
  Formula,
  Address,
};

inline constexpr std::array<ElementType, 11> kAllElementTypes = {
    ElementType::NarrativeText, ElementType::Title,         ElementType::ListItem,
    ElementType::UncategorizedText, ElementType::Footer,    ElementType::Table,
    ElementType::Header,        ElementType::Image,         ElementType::FigureCaption,
    ElementType::Formula,       ElementType::Address,
};

inline std::string_view to_string(ElementType t) {
  switch (t) {
    case ElementType::NarrativeText: return "NarrativeText";
    case ElementType::Title: return "Title";
    case ElementType::ListItem: return "ListItem";
    case ElementType::UncategorizedText: return "UncategorizedText";
    case ElementType::Footer: return "Footer";
    case ElementType::Table: return "Table";
    case ElementType::Header: return "Header";
    case ElementType::Image: return "Image";
    case ElementType::FigureCaption: return "FigureCaption";
    case ElementType::Formula: return "Formula";
    case ElementType::Address: return "Address";
  }
  return "UncategorizedText";
}

inline std::optional<ElementType> element_type_from_string(std::string_view s) {
  for (auto t : kAllElementTypes) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

/// Page-relative box, all coordinates in [0,1].
struct BoundingBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool operator==(const BoundingBox&) const = default;
};

struct DocumentElement {
  std::string element_id;
  ElementType element_type = ElementType::UncategorizedText;
  std::string text;
  int page_number = 1;
  std::optional<BoundingBox> bbox;

  bool operator==(const DocumentElement&) const = default;
};

struct Document {
  std::string doc_id;
  std::vector<DocumentElement> elements;  // reading order
  int page_count = 0;

  bool operator==(const Document&) const = default;
};

struct ParsedDocument {
  Document document;
  std::vector<std::string> warnings;
};

struct BenchmarkInstance {
  std::string instance_id;
  std::string doc_name;
  std::string question;
  std::string question_type;
  std::string answer;
  std::string evidence_text;
  int page_number = 1;

  bool operator==(const BenchmarkInstance&) const = default;
};

struct LineFailure {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct BenchmarkLoad {
  std::vector<BenchmarkInstance> instances;
  std::vector<LineFailure> failures;
};

using ElementHistogram = std::map<ElementType, std::size_t>;

namespace detail {

inline int read_page_number(const nlohmann::json& obj, std::size_t ordinal) {
  const nlohmann::json* page = nullptr;
  if (auto md = obj.find("metadata"); md != obj.end() && md->is_object()) {
    if (auto p = md->find("page_number"); p != md->end()) page = &*p;
  }
  if (!page) {
    if (auto p = obj.find("page_number"); p != obj.end()) page = &*p;
    else if (auto q = obj.find("page"); q != obj.end()) page = &*q;
  }
  if (!page || !page->is_number_integer()) {
    throw Error(ErrorCode::MalformedInput,
                "element " + std::to_string(ordinal) + " has no integer page_number");
  }
  auto value = page->get<long long>();
  if (value < 1) {
    throw Error(ErrorCode::MalformedInput,
                "element " + std::to_string(ordinal) + " has page_number < 1");
  }
  return static_cast<int>(value);
}

// Accepts either a bare point list [[x,y],...] in page-relative units or the
// object form {points, layout_width, layout_height} emitted by some extractors.
inline std::optional<BoundingBox> read_bbox(const nlohmann::json& obj, std::size_t ordinal) {
  auto md = obj.find("metadata");
  if (md == obj.end() || !md->is_object()) return std::nullopt;
  auto coords = md->find("coordinates");
  if (coords == md->end() || coords->is_null()) return std::nullopt;

  const nlohmann::json* points = &*coords;
  double scale_x = 1.0;
  double scale_y = 1.0;
  if (coords->is_object()) {
    auto p = coords->find("points");
    if (p == coords->end()) return std::nullopt;
    points = &*p;
    if (auto w = coords->find("layout_width"); w != coords->end() && w->is_number()) {
      scale_x = w->get<double>();
    }
    if (auto h = coords->find("layout_height"); h != coords->end() && h->is_number()) {
      scale_y = h->get<double>();
    }
  }
  const std::string where = "element " + std::to_string(ordinal);
  if (!points->is_array() || points->empty()) {
    throw Error(ErrorCode::MalformedInput, where + ": coordinates must be a non-empty point list");
  }
  if (scale_x <= 0 || scale_y <= 0) {
    throw Error(ErrorCode::MalformedInput, where + ": non-positive layout size");
  }
  BoundingBox box{1.0, 1.0, 0.0, 0.0};
  bool first = true;
  for (const auto& pt : *points) {
    if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number()) {
      throw Error(ErrorCode::MalformedInput, where + ": coordinate must be [x, y]");
    }
    double x = pt[0].get<double>() / scale_x;
    double y = pt[1].get<double>() / scale_y;
    if (!(x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0)) {
      throw Error(ErrorCode::MalformedInput, where + ": coordinate outside [0,1]");
    }
    if (first) {
      box = {x, y, x, y};
      first = false;
    } else {
      box.x0 = std::min(box.x0, x);
      box.y0 = std::min(box.y0, y);
      box.x1 = std::max(box.x1, x);
      box.y1 = std::max(box.y1, y);
    }
  }
  return box;
}

inline std::string required_string(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw Error(ErrorCode::MalformedInput, std::string("missing string field '") + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace detail

/// Parses one document's element JSON array. Unknown element types are kept as
/// UncategorizedText and reported in `warnings`; missing ids become
/// `doc_id#ordinal`.
inline ParsedDocument parse_element_json(std::string_view raw, const std::string& doc_id,
                                         std::optional<int> page_count = std::nullopt) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MalformedInput, std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_array()) {
    throw Error(ErrorCode::MalformedInput, "element input must be a JSON array");
  }

  ParsedDocument out;
  out.document.doc_id = doc_id;
  out.document.elements.reserve(root.size());
  int max_page = 0;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const auto& obj = root[i];
    if (!obj.is_object()) {
      throw Error(ErrorCode::MalformedInput, "element " + std::to_string(i) + " is not an object");
    }
    DocumentElement el;
    auto type_name = detail::required_string(obj, "type");
    if (auto t = element_type_from_string(type_name)) {
      el.element_type = *t;
    } else {
      el.element_type = ElementType::UncategorizedText;
      out.warnings.push_back("element " + std::to_string(i) + ": unknown type '" + type_name +
                             "' mapped to UncategorizedText");
    }
    el.text = detail::required_string(obj, "text");
    el.page_number = detail::read_page_number(obj, i);
    el.bbox = detail::read_bbox(obj, i);
    if (auto id = obj.find("element_id"); id != obj.end() && id->is_string() &&
                                          !id->get<std::string>().empty()) {
      el.element_id = id->get<std::string>();
    } else {
      el.element_id = doc_id + "#" + std::to_string(i);
    }
    max_page = std::max(max_page, el.page_number);
    out.document.elements.push_back(std::move(el));
  }

  if (page_count) {
    if (*page_count < 1 || *page_count < max_page) {
      throw Error(ErrorCode::MalformedInput, "page_count smaller than the largest element page");
    }
    out.document.page_count = *page_count;
  } else {
    out.document.page_count = max_page;
  }
  return out;
}

/// Inverse of parse_element_json for documents produced by it.
inline std::string to_element_json(const Document& doc) {
  auto arr = nlohmann::json::array();
  for (const auto& el : doc.elements) {
    nlohmann::json md{{"page_number", el.page_number}};
    if (el.bbox) {
      const auto& b = *el.bbox;
      md["coordinates"] = {{b.x0, b.y0}, {b.x1, b.y0}, {b.x1, b.y1}, {b.x0, b.y1}};
    }
    arr.push_back({{"type", std::string(to_string(el.element_type))},
                   {"element_id", el.element_id},
                   {"text", el.text},
                   {"metadata", std::move(md)}});
  }
  return arr.dump();
}

/// Line-delimited benchmark records. Blank lines are skipped; every other
/// malformed line is collected as a failure.
inline BenchmarkLoad load_benchmark(std::string_view raw) {
  BenchmarkLoad out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= raw.size()) {
    auto end = raw.find('\n', start);
    if (end == std::string_view::npos) end = raw.size();
    auto line = text::trim(raw.substr(start, end - start));
    ++line_no;
    start = end + 1;
    if (line.empty()) {
      if (end == raw.size()) break;
      continue;
    }
    try {
      auto obj = nlohmann::json::parse(line);
      if (!obj.is_object()) throw Error(ErrorCode::MalformedInput, "record is not an object");
      BenchmarkInstance inst;
      inst.instance_id = detail::required_string(obj, "financebench_id");
      inst.doc_name = detail::required_string(obj, "doc_name");
      inst.question = detail::required_string(obj, "question");
      inst.answer = detail::required_string(obj, "answer");
      inst.evidence_text = detail::required_string(obj, "evidence_text");
      if (auto qt = obj.find("question_type"); qt != obj.end() && qt->is_string()) {
        inst.question_type = qt->get<std::string>();
      }
      auto page = obj.find("page_number");
      if (page == obj.end() || !page->is_number_integer() || page->get<long long>() < 1) {
        throw Error(ErrorCode::MalformedInput, "page_number must be a positive integer");
      }
      inst.page_number = static_cast<int>(page->get<long long>());
      if (text::is_blank(inst.question) || text::is_blank(inst.answer) ||
          text::is_blank(inst.evidence_text)) {
        throw Error(ErrorCode::MalformedInput, "question, answer and evidence_text must be non-empty");
      }
      out.instances.push_back(std::move(inst));
    } catch (const nlohmann::json::exception& e) {
      out.failures.push_back({line_no, e.what()});
    } catch (const Error& e) {
      out.failures.push_back({line_no, e.what()});
    }
    if (end == raw.size()) break;
  }
  if (out.instances.empty()) {
    throw Error(ErrorCode::NoValidRecords,
                "no valid benchmark records (" + std::to_string(out.failures.size()) +
                    " malformed lines)");
  }
  return out;
}

inline ElementHistogram element_stats(const Document& doc) {
  ElementHistogram hist;
  for (auto t : kAllElementTypes) hist[t] = 0;
  for (const auto& el : doc.elements) ++hist[el.element_type];
  return hist;
}

}  // namespace elemrag
