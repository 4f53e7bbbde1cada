#include "pcaps/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "pcaps/error.hpp"

namespace pcaps {

namespace {

constexpr const char* kMagic = "PCAPS";

void append_floats(std::string& out, const Tensor& t) {
  for (double v : t.values()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
  }
}

void read_floats(const std::string& data, std::size_t& offset, Tensor& t, const std::string& path) {
  const std::size_t bytes = t.size() * 4;
  if (offset + bytes > data.size()) throw CheckpointTruncatedError(path + ": truncated parameter data");
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[offset + i * 4 + b])) << (8 * b);
    }
    t[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  offset += bytes;
}

bool valid_token(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c == ' ' || c == '\n' || c == '\t' || c == '\r') return false;
  return true;
}

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::map<std::string, std::string>& metadata,
                     const std::filesystem::path& path) {
  std::ostringstream header;
  header << kMagic << ' ' << kCheckpointVersion << '\n';
  header << "step " << store.step() << '\n';
  for (const auto& [key, value] : metadata) {
    if (!valid_token(key) || value.find('\n') != std::string::npos) {
      throw InvalidArgument("checkpoint: metadata key '" + key + "' or its value is not storable");
    }
    header << "meta " << key << ' ' << value << '\n';
  }
  std::string body;
  for (const auto& [name, entry] : store) {
    if (!valid_token(name)) throw InvalidArgument("checkpoint: parameter name '" + name + "' is not storable");
    header << "param " << name << ' ' << (entry.trainable ? 1 : 0);
    for (auto d : entry.value.shape()) header << ' ' << d;
    header << '\n';
    append_floats(body, entry.value);
    if (entry.trainable) {
      append_floats(body, entry.m.size() == entry.value.size() ? entry.m : Tensor(entry.value.shape()));
      append_floats(body, entry.v.size() == entry.value.size() ? entry.v : Tensor(entry.value.shape()));
    }
  }
  header << "end_header\n";
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + where);
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::size_t offset = 0;
  auto next_line = [&](const char* expecting) {
    const std::size_t end = data.find('\n', offset);
    if (end == std::string::npos) throw CheckpointTruncatedError(where + ": header ends before " + expecting);
    std::string line = data.substr(offset, end - offset);
    offset = end + 1;
    return line;
  };

  if (data.compare(0, std::strlen(kMagic), kMagic) != 0 ||
      (data.size() > std::strlen(kMagic) && data[std::strlen(kMagic)] != ' ')) {
    throw CheckpointMagicError(where + ": not a checkpoint (magic mismatch)");
  }
  {
    std::istringstream first(next_line("the version"));
    std::string magic;
    int version = 0;
    if (!(first >> magic >> version)) throw CheckpointFormatError(where + ": malformed version line");
    if (version != kCheckpointVersion) {
      throw CheckpointVersionError(where + ": version " + std::to_string(version) + ", expected " +
                                   std::to_string(kCheckpointVersion));
    }
  }

  Checkpoint ckpt;
  struct Declared {
    std::string name;
    bool trainable;
    Shape shape;
  };
  std::vector<Declared> params;
  bool ended = false;
  while (!ended) {
    const std::string line = next_line("end_header");
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "end_header") {
      ended = true;
    } else if (kind == "step") {
      std::int64_t step = 0;
      if (!(ls >> step)) throw CheckpointFormatError(where + ": malformed step line");
      ckpt.store.set_step(step);
    } else if (kind == "meta") {
      std::string key;
      if (!(ls >> key)) throw CheckpointFormatError(where + ": malformed meta line");
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ckpt.metadata[key] = value;
    } else if (kind == "param") {
      Declared d;
      int trainable = 0;
      if (!(ls >> d.name >> trainable) || (trainable != 0 && trainable != 1)) {
        throw CheckpointFormatError(where + ": malformed param line '" + line + "'");
      }
      d.trainable = trainable == 1;
      std::size_t dim = 0;
      while (ls >> dim) {
        if (dim == 0) throw CheckpointFormatError(where + ": zero dimension for " + d.name);
        d.shape.push_back(dim);
      }
      if (d.shape.empty() || !ls.eof()) throw CheckpointFormatError(where + ": malformed shape for " + d.name);
      params.push_back(std::move(d));
    } else {
      throw CheckpointFormatError(where + ": unknown header entry '" + kind + "'");
    }
  }
  for (auto& d : params) {
    Tensor value(d.shape);
    read_floats(data, offset, value, where);
    ParameterEntry& e = ckpt.store.add(d.name, std::move(value), d.trainable);
    if (d.trainable) {
      read_floats(data, offset, e.m, where);
      read_floats(data, offset, e.v, where);
    }
  }
  if (offset != data.size()) throw CheckpointFormatError(where + ": trailing bytes after parameter data");
  return ckpt;
}

void restore_into(ParameterStore& dst, const ParameterStore& src) {
  if (dst.size() != src.size()) {
    throw CheckpointShapeError("checkpoint has " + std::to_string(src.size()) + " parameters, model expects " +
                               std::to_string(dst.size()));
  }
  for (const auto& [name, s] : src) {
    if (!dst.contains(name)) throw CheckpointShapeError("checkpoint parameter '" + name + "' is not in the model");
    ParameterEntry& d = dst.at(name);
    if (d.value.shape() != s.value.shape() || d.trainable != s.trainable) {
      throw CheckpointShapeError("checkpoint parameter '" + name + "' has shape " + shape_string(s.value.shape()) +
                                 ", model expects " + shape_string(d.value.shape()));
    }
  }
  for (const auto& [name, s] : src) {
    ParameterEntry& d = dst.at(name);
    for (std::size_t i = 0; i < s.value.size(); ++i) d.value[i] = dst.store(s.value[i]);
    if (s.trainable) {
      d.m = s.m;
      d.v = s.v;
    }
    d.grad = Tensor(d.value.shape());
  }
  dst.set_step(src.step());
}

}  // namespace pcaps
