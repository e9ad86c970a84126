#include "mcl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace mcl {
namespace {

constexpr char kMagic[4] = {'M', 'C', 'L', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

std::uint64_t ArrayRecord::element_count() const {
  std::uint64_t n = 1;
  for (std::uint64_t d : dims) n *= d;
  return n;
}

void Checkpoint::add_scalar(const std::string& name, double value) {
  records.push_back(ArrayRecord{name, {1}, {value}});
}

void Checkpoint::add_vector(const std::string& name, const FlatVector& v) {
  ArrayRecord rec;
  rec.name = name;
  rec.dims = {static_cast<std::uint64_t>(v.size())};
  rec.data.assign(v.data(), v.data() + v.size());
  records.push_back(std::move(rec));
}

void Checkpoint::add_matrix(const std::string& name, const Matrix& m) {
  ArrayRecord rec;
  rec.name = name;
  rec.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  rec.data.assign(m.data(), m.data() + m.size());
  records.push_back(std::move(rec));
}

void Checkpoint::add_stack(const std::string& prefix, const LayerStack& stack) {
  for (std::size_t k = 0; k < stack.weights.size(); ++k) {
    add_matrix(prefix + "/L" + std::to_string(k) + "/W", stack.weights[k]);
    add_vector(prefix + "/L" + std::to_string(k) + "/b", stack.biases[k]);
  }
}

const ArrayRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& rec : records) {
    if (rec.name == name) return &rec;
  }
  return nullptr;
}

const ArrayRecord& Checkpoint::require(const std::string& name) const {
  const ArrayRecord* rec = find(name);
  if (rec == nullptr) throw FormatError("checkpoint: missing record '" + name + "'");
  return *rec;
}

double Checkpoint::get_scalar(const std::string& name) const {
  const ArrayRecord& rec = require(name);
  if (rec.data.size() != 1) throw FormatError("checkpoint: record '" + name + "' is not scalar");
  return rec.data[0];
}

FlatVector Checkpoint::get_vector(const std::string& name) const {
  const ArrayRecord& rec = require(name);
  FlatVector v(static_cast<Index>(rec.data.size()));
  std::copy(rec.data.begin(), rec.data.end(), v.data());
  return v;
}

Matrix Checkpoint::get_matrix(const std::string& name) const {
  const ArrayRecord& rec = require(name);
  if (rec.dims.size() != 2) {
    throw FormatError("checkpoint: record '" + name + "' has rank " +
                      std::to_string(rec.dims.size()) + ", expected 2");
  }
  Matrix m(static_cast<Index>(rec.dims[0]), static_cast<Index>(rec.dims[1]));
  std::copy(rec.data.begin(), rec.data.end(), m.data());
  return m;
}

LayerStack Checkpoint::get_stack(const std::string& prefix) const {
  LayerStack stack;
  std::vector<std::tuple<std::string, Index, Index>> shapes;
  for (std::size_t k = 0;; ++k) {
    const std::string wname = prefix + "/L" + std::to_string(k) + "/W";
    if (find(wname) == nullptr) break;
    Matrix w = get_matrix(wname);
    FlatVector b = get_vector(prefix + "/L" + std::to_string(k) + "/b");
    if (b.size() != w.cols()) {
      throw FormatError("checkpoint: bias length mismatch for '" + wname + "'");
    }
    shapes.emplace_back("L" + std::to_string(k) + "/W", w.rows(), w.cols());
    shapes.emplace_back("L" + std::to_string(k) + "/b", b.size(), 1);
    stack.weights.push_back(std::move(w));
    stack.biases.push_back(std::move(b));
  }
  if (stack.weights.empty()) {
    throw FormatError("checkpoint: no layers under prefix '" + prefix + "'");
  }
  stack.layout = LayoutMap::contiguous(shapes);
  return stack;
}

void Checkpoint::set_config_hash(std::uint64_t hash) {
  add_scalar(kConfigHashRecord, std::bit_cast<double>(hash));
}

std::uint64_t Checkpoint::config_hash() const {
  const ArrayRecord* rec = find(kConfigHashRecord);
  if (rec == nullptr || rec->data.size() != 1) return 0;
  return std::bit_cast<std::uint64_t>(rec->data[0]);
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  put_u32(os, Checkpoint::kVersion);
  for (const auto& rec : ckpt.records) {
    if (rec.element_count() != rec.data.size()) {
      throw ShapeError("checkpoint: record '" + rec.name + "' dims do not match payload");
    }
    put_u32(os, static_cast<std::uint32_t>(rec.name.size()));
    os.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
    put_u32(os, static_cast<std::uint32_t>(rec.dims.size()));
    for (std::uint64_t d : rec.dims) put_u64(os, d);
    for (double v : rec.data) put_u64(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw IoError("checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4)) throw IoError("checkpoint: truncated file");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic '" + std::string(magic, 4) + "'");
  }
  const std::uint32_t version = get_u32(is);
  if (version != Checkpoint::kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  while (true) {
    is.peek();
    if (is.eof()) break;
    ArrayRecord rec;
    const std::uint32_t name_len = get_u32(is);
    rec.name.resize(name_len);
    if (!is.read(rec.name.data(), name_len)) throw IoError("checkpoint: truncated file");
    const std::uint32_t rank = get_u32(is);
    rec.dims.resize(rank);
    for (std::uint32_t i = 0; i < rank; ++i) rec.dims[i] = get_u64(is);
    rec.data.resize(rec.element_count());
    for (auto& v : rec.data) v = std::bit_cast<double>(get_u64(is));
    ckpt.records.push_back(std::move(rec));
  }
  return ckpt;
}

}  // namespace mcl
