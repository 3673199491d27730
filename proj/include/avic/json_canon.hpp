#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "avic/common.hpp"

namespace avic {

// Minimal JSON document model with one canonical serialization: object keys
// sorted, doubles printed with six significant digits, integers printed raw.
// serialize(parse(serialize(x))) == serialize(x).
struct Json {
    enum class Kind { object, array, string, number, integer, uinteger, boolean };

    Kind kind = Kind::object;
    std::map<std::string, Json> object;
    std::vector<Json> array;
    std::string str;
    double num = 0;
    int64_t inum = 0;
    uint64_t unum = 0;
    bool boolean = false;

    static Json obj() { return Json{}; }
    static Json arr() {
        Json j;
        j.kind = Kind::array;
        return j;
    }
    static Json of(const std::string& s) {
        Json j;
        j.kind = Kind::string;
        j.str = s;
        return j;
    }
    static Json of(const char* s) { return of(std::string(s)); }
    static Json of(double v) {
        Json j;
        j.kind = Kind::number;
        j.num = v;
        return j;
    }
    static Json of(int v) {
        Json j;
        j.kind = Kind::integer;
        j.inum = v;
        return j;
    }
    static Json of(int64_t v) {
        Json j;
        j.kind = Kind::integer;
        j.inum = v;
        return j;
    }
    static Json of(uint64_t v) {
        Json j;
        j.kind = Kind::uinteger;
        j.unum = v;
        return j;
    }
    static Json of(bool v) {
        Json j;
        j.kind = Kind::boolean;
        j.boolean = v;
        return j;
    }

    Json& operator[](const std::string& key) { return object[key]; }
    void push(Json v) { array.push_back(std::move(v)); }
};

std::string json_serialize(const Json& j);
Json json_parse(const std::string& text);  // throws IoError on malformed input

// %.6g with non-finite values rejected
std::string format_number(double v);

}  // namespace avic
