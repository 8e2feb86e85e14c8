#pragma once

#include <string>
#include <vector>

#include "hoi/optim.hpp"
#include "hoi/tensor.hpp"

namespace hoi {

// One named tensor in a "HOIT" checkpoint. Entries keep file order so a
// write/read/write cycle is byte-identical.
struct CheckpointEntry {
    std::string name;
    Shape dims;
    std::vector<float> data;
};

using Checkpoint = std::vector<CheckpointEntry>;

void write_checkpoint(const std::string& path, const Checkpoint& entries);
Checkpoint read_checkpoint(const std::string& path);

const CheckpointEntry* find_entry(const Checkpoint& ck, const std::string& name);

// Parameter bridging. Saving casts to f32; loading casts back to the model's
// scalar type.
template <typename S>
Checkpoint params_to_checkpoint(const std::vector<Param<S>*>& params) {
    Checkpoint ck;
    ck.reserve(params.size());
    for (const auto* p : params) {
        CheckpointEntry e;
        e.name = p->name;
        e.dims = p->value().dims;
        e.data.resize(p->value().data.size());
        for (std::size_t i = 0; i < e.data.size(); ++i)
            e.data[i] = static_cast<float>(p->value().data[i]);
        ck.push_back(std::move(e));
    }
    return ck;
}

template <typename S>
void load_params_from_checkpoint(const Checkpoint& ck, const std::vector<Param<S>*>& params) {
    for (auto* p : params) {
        const CheckpointEntry* e = find_entry(ck, p->name);
        if (!e) throw format_error("checkpoint is missing parameter '" + p->name + "'");
        if (e->dims != p->value().dims) {
            throw format_error("checkpoint parameter '" + p->name + "' has shape " +
                               shape_str(e->dims) + ", model expects " +
                               shape_str(p->value().dims));
        }
        for (std::size_t i = 0; i < e->data.size(); ++i)
            p->value().data[i] = static_cast<S>(e->data[i]);
    }
}

}  // namespace hoi
