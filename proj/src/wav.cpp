#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "s2a/error.h"
#include "s2a/synth.h"

namespace s2a {

namespace {

void put_le(std::vector<std::uint8_t>& out, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_le(const std::vector<std::uint8_t>& in, std::size_t pos, int bytes) {
  if (pos + static_cast<std::size_t>(bytes) > in.size()) throw DataError("WAV data truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint32_t{in[pos + static_cast<std::size_t>(i)]} << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_wav(const Waveform& w) {
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_le(out, 36 + data_bytes, 4);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_le(out, 16, 4);
  put_le(out, 1, 2);  // PCM
  put_le(out, 1, 2);  // mono
  put_le(out, static_cast<std::uint32_t>(w.sample_rate), 4);
  put_le(out, static_cast<std::uint32_t>(w.sample_rate) * 2, 4);
  put_le(out, 2, 2);
  put_le(out, 16, 2);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_le(out, data_bytes, 4);
  for (float s : w.samples) {
    const auto q = static_cast<std::int16_t>(std::lround(std::clamp(static_cast<double>(s), -1.0, 1.0) * 32767.0));
    put_le(out, static_cast<std::uint16_t>(q), 2);
  }
  return out;
}

Waveform decode_wav(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError("not a RIFF/WAVE file");
  }
  Waveform w;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = get_le(bytes, pos + 4, 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0) {
      if (get_le(bytes, body, 2) != 1 || get_le(bytes, body + 2, 2) != 1 || get_le(bytes, body + 14, 2) != 16) {
        throw DataError("only mono 16-bit PCM WAV is supported");
      }
      w.sample_rate = static_cast<int>(get_le(bytes, body + 4, 4));
      have_fmt = true;
    } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
      if (!have_fmt) throw DataError("WAV data chunk before fmt chunk");
      for (std::size_t i = 0; i + 1 < len; i += 2) {
        const auto q = static_cast<std::int16_t>(get_le(bytes, body + i, 2));
        w.samples.push_back(static_cast<float>(q / 32767.0));
      }
      return w;
    }
    pos = body + len + (len & 1);
  }
  throw DataError("WAV file has no data chunk");
}

void write_wav(const std::string& path, const Waveform& w) {
  const auto bytes = encode_wav(w);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace s2a
