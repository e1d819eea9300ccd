package util
var r = '/' // rune
var s = "a\"b" /* x */
