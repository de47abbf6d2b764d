#include "conrad/npy.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace conrad {

namespace {

constexpr char kMagic[7] = "\x93NUMPY";

std::string header_dict(const std::string& descr, const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << "{'descr': '" << descr << "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) os << shape[i] << (shape.size() == 1 ? "," : (i + 1 < shape.size() ? ", " : ""));
  os << "), }";
  std::string h = os.str();
  // Pad with spaces so that magic(6)+ver(2)+len(2)+header is a multiple of 64.
  const std::size_t unpadded = 10 + h.size() + 1;
  const std::size_t padded = (unpadded + 63) / 64 * 64;
  h.append(padded - unpadded, ' ');
  h.push_back('\n');
  return h;
}

void write_npy(const std::string& path, const std::string& descr,
               const std::vector<std::int64_t>& shape, const void* data, std::size_t bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  const std::string h = header_dict(descr, shape);
  const std::uint16_t hlen = static_cast<std::uint16_t>(h.size());
  f.write(kMagic, 6);
  f.put('\x01');
  f.put('\x00');
  f.write(reinterpret_cast<const char*>(&hlen), 2);
  f.write(h.data(), static_cast<std::streamsize>(h.size()));
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!f) throw std::runtime_error("short write: " + path);
}

// Pull "key': value" fragments out of the header dict without a real parser;
// the format written by numpy is stable enough for this.
std::string dict_field(const std::string& dict, const std::string& key) {
  const auto pos = dict.find("'" + key + "'");
  if (pos == std::string::npos) throw std::runtime_error("npy header missing field " + key);
  auto colon = dict.find(':', pos);
  auto end = dict.find_first_of(",}", colon);
  // Shape tuples contain commas; match the closing parenthesis instead.
  if (dict[dict.find_first_not_of(' ', colon + 1)] == '(') end = dict.find(')', colon) + 1;
  return dict.substr(colon + 1, end - colon - 1);
}

std::vector<std::int64_t> parse_shape(const std::string& field) {
  std::vector<std::int64_t> shape;
  std::string digits;
  for (char c : field) {
    if (c >= '0' && c <= '9') {
      digits.push_back(c);
    } else if (!digits.empty()) {
      shape.push_back(std::stoll(digits));
      digits.clear();
    }
  }
  if (!digits.empty()) shape.push_back(std::stoll(digits));
  return shape;
}

}  // namespace

std::int64_t NpyArray::numel() const {
  std::int64_t n = 1;
  for (std::int64_t d : shape) n *= d;
  return n;
}

NpyArray npy_load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open npy file: " + path);
  char magic[6];
  f.read(magic, 6);
  if (!f || std::memcmp(magic, kMagic, 6) != 0)
    throw std::runtime_error("not an npy file: " + path);
  char ver[2];
  f.read(ver, 2);
  std::uint32_t hlen = 0;
  if (ver[0] == 1) {
    std::uint16_t h16 = 0;
    f.read(reinterpret_cast<char*>(&h16), 2);
    hlen = h16;
  } else if (ver[0] == 2 || ver[0] == 3) {
    f.read(reinterpret_cast<char*>(&hlen), 4);
  } else {
    throw std::runtime_error("unsupported npy version in " + path);
  }
  std::string dict(hlen, '\0');
  f.read(dict.data(), hlen);
  if (!f) throw std::runtime_error("truncated npy header: " + path);

  if (dict_field(dict, "fortran_order").find("True") != std::string::npos)
    throw std::runtime_error("fortran-order npy unsupported: " + path);
  const std::string descr = dict_field(dict, "descr");

  NpyArray arr;
  arr.shape = parse_shape(dict_field(dict, "shape"));
  const std::int64_t n = arr.numel();

  if (descr.find("u1") != std::string::npos) {
    arr.is_u8 = true;
    arr.u8.resize(static_cast<std::size_t>(n));
    f.read(reinterpret_cast<char*>(arr.u8.data()), n);
  } else if (descr.find("i8") != std::string::npos) {
    arr.i64.resize(static_cast<std::size_t>(n));
    f.read(reinterpret_cast<char*>(arr.i64.data()), n * 8);
  } else {
    throw std::runtime_error("unsupported npy dtype " + descr + " in " + path);
  }
  if (!f) throw std::runtime_error("truncated npy payload: " + path);
  return arr;
}

void npy_save_u8(const std::string& path, const std::vector<std::int64_t>& shape,
                 const std::vector<std::uint8_t>& data) {
  write_npy(path, "|u1", shape, data.data(), data.size());
}

void npy_save_i64(const std::string& path, const std::vector<std::int64_t>& shape,
                  const std::vector<std::int64_t>& data) {
  write_npy(path, "<i8", shape, data.data(), data.size() * 8);
}

}  // namespace conrad
