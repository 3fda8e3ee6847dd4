#include "cfpo/util.hpp"

#include "cfpo/errors.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cfpo {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::WrongKind: return "WrongKind";
    case Errc::InvalidExample: return "InvalidExample";
    case Errc::UnrenderableFormat: return "UnrenderableFormat";
    case Errc::NoAnswerFound: return "NoAnswerFound";
    case Errc::UnvisitedEntry: return "UnvisitedEntry";
    case Errc::EmptyPool: return "EmptyPool";
    case Errc::UnknownFormat: return "UnknownFormat";
    case Errc::MetricOutOfRange: return "MetricOutOfRange";
    case Errc::MalformedResponse: return "MalformedResponse";
    case Errc::NoFailures: return "NoFailures";
    case Errc::IoError: return "IoError";
    case Errc::ParseError: return "ParseError";
    case Errc::SizeTooLarge: return "SizeTooLarge";
    case Errc::BackendError: return "BackendError";
    case Errc::Timeout: return "Timeout";
    case Errc::RateLimited: return "RateLimited";
    case Errc::Fatal: return "Fatal";
    case Errc::MissingFixture: return "MissingFixture";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::MissingRun: return "MissingRun";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

std::string to_hex(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::string_view> tags) {
  std::uint64_t h = fnv1a(to_hex(base));
  for (auto tag : tags) {
    h = fnv1a(tag, h);
    h = fnv1a("/", h);
  }
  return h;
}

std::uint64_t rng_below(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound == 0) fail(Errc::SizeTooLarge, "rng_below with bound 0");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v = rng();
  while (v >= limit) v = rng();
  return v % bound;
}

double rng_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  k = std::min(k, n);
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  // Partial Fisher-Yates; only the first k slots are finalized.
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng_below(rng, n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

std::string trim(std::string_view text) { return ltrim(rtrim(text)); }

std::string rtrim(std::string_view text) {
  std::size_t end = text.size();
  while (end > 0 && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  return std::string(text.substr(0, end));
}

std::string ltrim(std::string_view text) {
  std::size_t begin = 0;
  while (begin < text.size() && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  return std::string(text.substr(begin));
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string to_upper(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

std::string title_case(std::string_view text) {
  std::string out(text);
  bool at_word_start = true;
  for (char& c : out) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isalpha(u)) {
      c = static_cast<char>(at_word_start ? std::toupper(u) : std::tolower(u));
      at_word_start = false;
    } else {
      at_word_start = true;
    }
  }
  return out;
}

bool starts_with(std::string_view text, std::string_view prefix) {
  return text.size() >= prefix.size() && text.substr(0, prefix.size()) == prefix;
}

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
  if (from.empty()) return text;
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.emplace_back(text.substr(start));
      break;
    }
    lines.emplace_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, std::string_view content) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::IoError, "cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

}  // namespace cfpo
