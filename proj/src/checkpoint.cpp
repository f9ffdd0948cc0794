#include "rsovseg/checkpoint.hpp"

#include <nlohmann/json.hpp>
#include <zlib.h>

#include <bit>
#include <cstring>

#include "rsovseg/errors.hpp"
#include "rsovseg/image_io.hpp"

namespace rsovseg {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'R', 'S', 'O', 'V', 'S', 'E', 'G', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint32_t crc_of(const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string serialize_checkpoint(const Model& model, const RunConfig& config, long iteration) {
  RunConfig snapshot = config;
  snapshot.model = model.config();
  json params = json::array();
  for (const auto& p : model.params().params()) {
    params.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  }
  const json header = {{"format", 1},
                       {"config", json::parse(emit_run_config(snapshot))},
                       {"iteration", iteration},
                       {"train_classes", model.train_classes()},
                       {"params", params}};
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u64(out, header_text.size());
  out += header_text;
  for (const auto& p : model.params().params()) {
    const auto v = p.value.data();
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  const std::uint32_t crc = crc_of(out.data(), out.size());
  char buf[4];
  std::memcpy(buf, &crc, 4);
  out.append(buf, 4);
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 8 + 4 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw DataError("checkpoint: bad magic or truncated file");
  }
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  if (crc_of(bytes.data(), bytes.size() - 4) != stored) {
    throw DataError("checkpoint: CRC mismatch (file is corrupt)");
  }
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 8, 8);
  if (header_len > bytes.size() - 20) throw DataError("checkpoint: header length out of range");

  Checkpoint ck;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  try {
    const json header = json::parse(bytes.substr(16, header_len));
    if (header.at("format").get<int>() != 1) throw DataError("checkpoint: unsupported format");
    ck.config = parse_run_config(header.at("config").dump(), false);
    ck.iteration = header.at("iteration").get<long>();
    const auto classes = header.at("train_classes").get<std::vector<std::string>>();
    ck.model = std::make_unique<Model>(ck.config.model, classes);
    for (const auto& p : header.at("params")) {
      names.push_back(p.at("name").get<std::string>());
      shapes.push_back(p.at("shape").get<Shape>());
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: invalid configuration: ") + e.what());
  }

  auto& params = ck.model->params().params();
  if (names.size() != params.size()) {
    throw DataError("checkpoint: " + std::to_string(names.size()) + " parameters stored, model has " +
                    std::to_string(params.size()));
  }
  std::size_t offset = 16 + header_len;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (names[i] != params[i].name || shapes[i] != params[i].value.shape()) {
      throw DataError("checkpoint: parameter " + std::to_string(i) + " is " + names[i] + " " +
                      to_string(shapes[i]) + ", model expects " + params[i].name + " " +
                      to_string(params[i].value.shape()));
    }
    const std::size_t n = params[i].value.size() * sizeof(double);
    if (offset + n > bytes.size() - 4) throw DataError("checkpoint: truncated parameter data");
    std::memcpy(params[i].value.mutable_data().data(), bytes.data() + offset, n);
    offset += n;
  }
  if (offset != bytes.size() - 4) throw DataError("checkpoint: trailing bytes after parameters");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const RunConfig& config, long iteration) {
  write_file_atomic(path, serialize_checkpoint(model, config, iteration));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace rsovseg
