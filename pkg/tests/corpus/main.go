package main
// Package doc
import "fmt"
func main() { fmt.Println(`raw // kept
/* kept */`) /* c */ }
