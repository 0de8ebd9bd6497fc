#include "dfl/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace dfl {
namespace {

constexpr char kMagic[4] = {'D', 'F', 'L', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint64_t u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  std::string str(std::uint64_t len) {
    need(len, "name");
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::uint64_t n, const char* what) {
    if (pos_ + n > bytes_.size()) {
      throw DataError("truncated checkpoint: needed " + std::to_string(n) +
                      " bytes for " + what + " at offset " + std::to_string(pos_));
    }
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const ParameterSet& params) {
  std::string out(kMagic, 4);
  for (const auto& e : params.entries()) {
    put_u64(out, e.name.size());
    out += e.name;
    put_u64(out, e.value.rank());
    for (std::size_t d : e.value.shape()) put_u64(out, d);
    for (double v : e.value.flat()) put_f64(out, v);
  }
  return out;
}

ParameterSet decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError("bad checkpoint magic: expected DFL1");
  }
  Reader r(bytes.substr(4));
  ParameterSet params;
  while (!r.done()) {
    std::uint64_t name_len = r.u64();
    std::string name = r.str(name_len);
    std::uint64_t rank = r.u64();
    Shape shape(rank);
    for (std::uint64_t i = 0; i < rank; ++i) shape[i] = r.u64();
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = r.f64();
    params.add(name, Tensor(std::move(shape), std::move(data)));
  }
  return params;
}

void save_checkpoint(const ParameterSet& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint for writing: " + path);
  std::string bytes = encode_checkpoint(params);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("short write to checkpoint: " + path);
}

ParameterSet load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace dfl
