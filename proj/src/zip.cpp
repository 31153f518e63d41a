#include "zip.hpp"

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "gridclear/dataio.hpp"

namespace gridclear::zip {
namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::string inflate_raw(const unsigned char* data, std::size_t size, std::size_t expected) {
  std::string out(expected, '\0');
  if (expected == 0) return out;
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw DataError("zip: inflateInit failed");
  zs.next_in = const_cast<Bytef*>(data);
  zs.avail_in = static_cast<uInt>(size);
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != expected) throw DataError("zip: corrupt deflate stream");
  return out;
}

}  // namespace

std::map<std::string, std::string> read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open archive " + path.string());
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 22) throw DataError(path.string() + ": not a zip archive");

  // End-of-central-directory record: scan backwards over a possible comment.
  std::size_t eocd = std::string::npos;
  for (std::size_t i = buf.size() - 22 + 1; i-- > 0;) {
    if (le32(&buf[i]) == 0x06054b50) {
      eocd = i;
      break;
    }
    if (buf.size() - i > 22 + 65535) break;
  }
  if (eocd == std::string::npos) throw DataError(path.string() + ": missing end of central directory");
  const std::uint16_t entries = le16(&buf[eocd + 10]);
  std::size_t pos = le32(&buf[eocd + 16]);

  std::map<std::string, std::string> files;
  for (std::uint16_t e = 0; e < entries; ++e) {
    if (pos + 46 > buf.size() || le32(&buf[pos]) != 0x02014b50) throw DataError(path.string() + ": bad central directory");
    const std::uint16_t method = le16(&buf[pos + 10]);
    const std::uint32_t csize = le32(&buf[pos + 20]);
    const std::uint32_t usize = le32(&buf[pos + 24]);
    const std::uint16_t name_len = le16(&buf[pos + 28]);
    const std::uint16_t extra_len = le16(&buf[pos + 30]);
    const std::uint16_t comment_len = le16(&buf[pos + 32]);
    const std::uint32_t local = le32(&buf[pos + 42]);
    std::string name(reinterpret_cast<const char*>(&buf[pos + 46]), name_len);
    pos += 46u + name_len + extra_len + comment_len;
    if (!name.empty() && name.back() == '/') continue;

    if (local + 30 > buf.size() || le32(&buf[local]) != 0x04034b50) throw DataError(path.string() + ": bad local header for " + name);
    const std::size_t data = local + 30u + le16(&buf[local + 26]) + le16(&buf[local + 28]);
    if (data + csize > buf.size()) throw DataError(path.string() + ": truncated entry " + name);
    std::string content;
    if (method == 0) {
      content.assign(reinterpret_cast<const char*>(&buf[data]), csize);
    } else if (method == 8) {
      content = inflate_raw(&buf[data], csize, usize);
    } else {
      throw DataError(path.string() + ": unsupported compression method for " + name);
    }
    files.emplace(std::move(name), std::move(content));
  }
  return files;
}

}  // namespace gridclear::zip
