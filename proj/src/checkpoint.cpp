#include "kcfplm/checkpoint.hpp"

#include "kcfplm/error.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace kcf::ckpt {

namespace {

constexpr const char* kMagic = "kcfplm-tensors";

void write_number(std::ostream& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, res.ptr - buf);
}

bool valid_token(const std::string& s) {
  return !s.empty() && s.find_first_of(" \t\r\n") == std::string::npos;
}

}  // namespace

void write_tensor_file(std::ostream& out, const TensorFile& file) {
  out << kMagic << ' ' << kTensorFormatVersion << '\n';
  for (const auto& [k, v] : file.meta) {
    require(valid_token(k) && v.find('\n') == std::string::npos, "tensor file meta entries must be single-line");
    out << "meta " << k << ' ' << v << '\n';
  }
  for (const auto& [name, m] : file.tensors) {
    require(valid_token(name), "tensor names may not contain whitespace: " + name);
    out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (c) out << ' ';
        write_number(out, m(r, c));
      }
      out << '\n';
    }
  }
  out << "end\n";
}

TensorFile read_tensor_file(std::istream& in) {
  TensorFile file;
  std::string line;
  std::size_t line_no = 0;
  auto bad = [&](const std::string& why) -> void {
    fail(ErrorKind::input, "tensor file line " + std::to_string(line_no) + ": " + why);
  };
  if (!std::getline(in, line)) fail(ErrorKind::input, "tensor file is empty");
  ++line_no;
  {
    std::istringstream h(line);
    std::string magic;
    int version = 0;
    if (!(h >> magic >> version) || magic != kMagic) bad("missing '" + std::string(kMagic) + "' header");
    if (version != kTensorFormatVersion)
      fail(ErrorKind::version, "tensor file version " + std::to_string(version) + " is not supported (expected " +
                                   std::to_string(kTensorFormatVersion) + ")");
  }
  bool ended = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream f(line);
    std::string kind;
    f >> kind;
    if (kind == "meta") {
      std::string key, value;
      f >> key;
      std::getline(f >> std::ws, value);
      file.meta[key] = value;
    } else if (kind == "tensor") {
      std::string name;
      long rows = -1, cols = -1;
      if (!(f >> name >> rows >> cols) || rows < 0 || cols < 0) bad("malformed tensor header");
      ad::Matrix m(rows, cols);
      for (long r = 0; r < rows; ++r) {
        if (!std::getline(in, line)) bad("tensor " + name + " is truncated");
        ++line_no;
        const char* p = line.data();
        const char* end = p + line.size();
        for (long c = 0; c < cols; ++c) {
          while (p < end && *p == ' ') ++p;
          double v = 0;
          auto res = std::from_chars(p, end, v);
          if (res.ec != std::errc{}) bad("tensor " + name + " row has too few numeric values");
          m(r, c) = v;
          p = res.ptr;
        }
        while (p < end && *p == ' ') ++p;
        if (p != end) bad("tensor " + name + " row has extra values");
      }
      if (!file.tensors.emplace(name, std::move(m)).second) bad("duplicate tensor " + name);
    } else {
      bad("unexpected record '" + kind + "'");
    }
  }
  if (!ended) fail(ErrorKind::input, "tensor file is truncated (no end marker)");
  return file;
}

void save_tensor_file(const std::string& path, const TensorFile& file) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) fail(ErrorKind::input, "cannot write " + tmp);
    write_tensor_file(out, file);
    if (!out) fail(ErrorKind::input, "write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail(ErrorKind::input, "cannot move " + tmp + " to " + path);
}

TensorFile load_tensor_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::input, "cannot open tensor file: " + path);
  return read_tensor_file(in);
}

TensorFile capture(const nn::ParameterSet& params, std::map<std::string, std::string> meta) {
  TensorFile f;
  f.meta = std::move(meta);
  for (const auto& p : params.entries()) f.tensors[p.name] = p.var.value();
  return f;
}

namespace {

std::size_t fill(const TensorFile& file, nn::ParameterSet& params, bool require_all, const std::string& prefix,
                 bool strip) {
  std::size_t filled = 0;
  for (const auto& p : params.entries()) {
    if (p.name.rfind(prefix, 0) != 0) continue;
    const std::string key = strip ? p.name.substr(prefix.size()) : p.name;
    auto it = file.tensors.find(key);
    if (it == file.tensors.end()) {
      if (require_all) fail(ErrorKind::input, "tensor file has no entry " + key + " for parameter " + p.name);
      continue;
    }
    if (it->second.rows() != p.var.rows() || it->second.cols() != p.var.cols())
      fail(ErrorKind::input, "shape mismatch for " + p.name + ": file has " + std::to_string(it->second.rows()) + "x" +
                                 std::to_string(it->second.cols()) + ", model expects " +
                                 std::to_string(p.var.rows()) + "x" + std::to_string(p.var.cols()));
    ad::Var v = p.var;
    v.mutable_value() = it->second;
    ++filled;
  }
  return filled;
}

}  // namespace

std::size_t apply(const TensorFile& file, nn::ParameterSet& params, bool require_all, const std::string& prefix) {
  return fill(file, params, require_all, prefix, false);
}

std::size_t apply_relative(const TensorFile& file, nn::ParameterSet& params, const std::string& prefix) {
  const std::size_t n = fill(file, params, true, prefix + ".", true);
  if (n == 0) fail(ErrorKind::input, "no parameters under " + prefix + " to load");
  return n;
}

}  // namespace kcf::ckpt
